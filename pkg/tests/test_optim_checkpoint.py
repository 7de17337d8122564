import numpy as np
import pytest

from partsim.errors import FormatError, ShapeError
from partsim.nn import AdamState, Tensor, adam_step, load_checkpoint, save_checkpoint


def test_first_adam_step_moves_by_lr_against_gradient_sign():
    params = {'w': Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)}
    grads = {'w': np.array([0.5, -4.0, 1e-3])}
    new_params, state = adam_step(params, grads, AdamState(lr=0.1))
    np.testing.assert_allclose(new_params['w'].numpy(), [0.9, -1.9, 2.9], atol=1e-5)
    assert state.step == 1
    # inputs untouched
    np.testing.assert_array_equal(params['w'].numpy(), [1.0, -2.0, 3.0])
    assert new_params['w'].requires_grad


def test_adam_is_deterministic_over_steps():
    def run():
        params, state = {'w': np.array([0.3, 0.7])}, AdamState(lr=0.01)
        for step in range(5):
            params, state = adam_step(params, {'w': np.array([1.0, -1.0]) * (step + 1)}, state)
        return params['w']

    np.testing.assert_array_equal(run(), run())


def test_zero_gradient_leaves_parameters_and_counts_the_step():
    params, state = {'w': np.array([0.3, -0.7, 2.0])}, AdamState(lr=0.1)
    for expected_step in (1, 2, 3):
        params, state = adam_step(params, {'w': np.zeros(3)}, state)
        assert state.step == expected_step
        np.testing.assert_array_equal(params['w'], [0.3, -0.7, 2.0])


def test_adam_rejects_mismatched_gradient():
    with pytest.raises(ShapeError):
        adam_step({'w': np.zeros(3)}, {'w': np.zeros(4)}, AdamState())


@pytest.fixture
def tensors():
    rng = np.random.default_rng(5)
    return {'encoder.weight': rng.normal(size=(4, 3)).astype(np.float32),
            'encoder.bias': rng.normal(size=3).astype(np.float32)}


def test_checkpoint_round_trip(tmp_path, tensors):
    path = tmp_path / 'model.psck'
    digest = save_checkpoint(path, tensors, {'seed': 3})
    loaded, manifest = load_checkpoint(path)
    assert list(loaded) == list(tensors)
    for name in tensors:
        np.testing.assert_array_equal(loaded[name], tensors[name])
    assert manifest['seed'] == 3
    assert manifest['sha256'] == digest


def test_checkpoint_bytes_are_deterministic(tmp_path, tensors):
    save_checkpoint(tmp_path / 'a.psck', tensors)
    save_checkpoint(tmp_path / 'b.psck', tensors)
    assert (tmp_path / 'a.psck').read_bytes() == (tmp_path / 'b.psck').read_bytes()


def test_corrupted_checkpoint_is_rejected(tmp_path, tensors):
    path = tmp_path / 'model.psck'
    save_checkpoint(path, tensors)
    data = bytearray(path.read_bytes())
    data[-1] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match='hash mismatch'):
        load_checkpoint(path)


def test_wrong_magic_is_rejected(tmp_path):
    path = tmp_path / 'bogus.psck'
    path.write_bytes(b'NOPE' + b'\x00' * 32)
    with pytest.raises(FormatError):
        load_checkpoint(path)


def test_truncated_checkpoint_is_rejected(tmp_path, tensors):
    path = tmp_path / 'model.psck'
    save_checkpoint(path, tensors)
    path.write_bytes(path.read_bytes()[:20])
    with pytest.raises(FormatError):
        load_checkpoint(path)
