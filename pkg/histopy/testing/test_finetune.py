"""Test the two-step fine-tuning and the feature extraction."""
import numpy as np
import pytest

from histopy.errors import ConfigError, EmptyPatient, InvalidInput
from histopy.finetune import (FineTuneConfig, finetune_step1, finetune_step2,
                              finetune, pretrain, training_accuracy,
                              extract_tile_features, aggregate_patient,
                              tile_patient_map, FeatureMatrix)
from histopy.io import LabeledDataset
from histopy.nn import build_network
from histopy.tiling import Tile


def _red_blue(n=16, size=8):
    """Solid red and solid blue tiles."""
    tiles, labels = [], []
    for k, color in enumerate([(220, 20, 30), (30, 40, 200)]):
        for i in range(n):
            px = np.zeros((size, size, 3), dtype=np.uint8)
            px[:] = color
            tiles += [Tile(pixels=px, source_id=f"c{k}_{i:03d}")]
            labels += [k]
    return LabeledDataset(tiles, np.array(labels), ['red', 'blue'])


def _network(n_classes=2, seed=0):
    return build_network(n_classes=n_classes, feature_dim=16,
                         widths=(4, 8, 8), seed=seed)


_CFG = FineTuneConfig(lr_step1=1e-2, epochs_step1=20, lr_step2=5e-5,
                      epochs_step2=5, batch_size=8, seed=0)

# randomized fine-tuning runs of the freezing contract
N_FREEZE_RUNS = 20


# -----------------------------------------------------------------------------
# configuration


def test_finetune_config():
    cfg = FineTuneConfig()
    assert (cfg.lr_step1, cfg.epochs_step1) == (4e-4, 20)
    assert (cfg.lr_step2, cfg.epochs_step2) == (5e-5, 10)
    assert cfg.batch_size == 128
    with pytest.raises(ConfigError) as e:
        FineTuneConfig(lr_step1=0.)
    assert e.value.field == 'finetune.lr_step1'
    with pytest.raises(ConfigError):
        FineTuneConfig(epochs_step2=-1)
    with pytest.raises(ConfigError):
        FineTuneConfig(batch_size=0)


def test_class_mismatch():
    with pytest.raises(ConfigError):
        finetune_step1(_network(n_classes=3), _red_blue(2), _CFG)


# -----------------------------------------------------------------------------
# freezing contract


def test_zero_epochs():
    """Test that zero epochs leave the network untouched."""
    net, ds = _network(), _red_blue(4)
    cfg = FineTuneConfig(epochs_step1=0, epochs_step2=0)
    assert finetune_step1(net, ds, cfg).checksum() == net.checksum()
    assert finetune_step2(net, ds, cfg).checksum() == net.checksum()


def test_step1_freezes_part_a():
    net, ds = _network(), _red_blue(4)
    cfg = FineTuneConfig(lr_step1=1e-3, epochs_step1=2, batch_size=3)
    out = finetune_step1(net, ds, cfg)
    assert out.checksum('a') == net.checksum('a')
    assert out.checksum('b') != net.checksum('b')


def test_step2_freezes_part_b():
    net, ds = _network(), _red_blue(4)
    cfg = FineTuneConfig(lr_step2=1e-3, epochs_step2=2, batch_size=3)
    out = finetune_step2(net, ds, cfg)
    assert out.checksum('b') == net.checksum('b')
    assert out.checksum('a') != net.checksum('a')


def _noise_dataset(rng, n=6, size=8):
    tiles = [Tile(pixels=rng.integers(0, 256, (size, size, 3)).astype(
        np.uint8), source_id=f"t{i:03d}") for i in range(n)]
    labels = rng.permutation(np.arange(n) % 2)
    return LabeledDataset(tiles, labels, ['x', 'y'])


@pytest.mark.parametrize('seed', range(N_FREEZE_RUNS))
def test_freeze_contract_random(seed):
    """Test both freezing contracts on randomized runs."""
    rng = np.random.default_rng(seed)
    net, ds = _network(seed=seed), _noise_dataset(rng)
    cfg = FineTuneConfig(
        lr_step1=float(rng.uniform(1e-4, 1e-2)),
        epochs_step1=int(rng.integers(1, 3)),
        lr_step2=float(rng.uniform(1e-5, 1e-3)),
        epochs_step2=int(rng.integers(1, 3)),
        batch_size=int(rng.integers(1, 7)), seed=seed)
    step1 = finetune_step1(net, ds, cfg)
    assert step1.checksum('a') == net.checksum('a')
    step2 = finetune_step2(step1, ds, cfg)
    assert step2.checksum('b') == step1.checksum('b')


def test_reproducibility():
    """Test that two identical runs give bit-identical networks."""
    ds = _red_blue(4)
    cfg = FineTuneConfig(lr_step1=1e-3, epochs_step1=2, lr_step2=1e-3,
                         epochs_step2=1, batch_size=5, seed=3)
    sums = [finetune(_network(), ds, cfg).checksum() for _ in range(2)]
    assert sums[0] == sums[1]
    other = FineTuneConfig(lr_step1=1e-3, epochs_step1=2, lr_step2=1e-3,
                           epochs_step2=1, batch_size=5, seed=4)
    assert finetune(_network(), ds, other).checksum() != sums[0]


# -----------------------------------------------------------------------------
# learning


def test_red_blue_separable():
    """Test that step 1 separates solid red from solid blue tiles."""
    ds, history = _red_blue(), []
    net = finetune_step1(_network(), ds, _CFG, history=history)
    assert training_accuracy(net, ds) == 1.
    assert [h['epoch'] for h in history] == list(range(1, 21))
    assert all(h['stage'] == 'step1' for h in history)
    assert history[-1]['loss'] < history[0]['loss']
    # step 2 does not degrade the training loss
    net = finetune_step2(net, ds, _CFG, history=history)
    assert history[-1]['stage'] == 'step2'
    assert history[-1]['loss'] <= 1.02 * history[19]['loss']


def test_pretrain():
    ds, history = _red_blue(4), []
    net = pretrain(_network(), ds, lr=1e-3, epochs=2, batch_size=4,
                   history=history)
    assert [h['stage'] for h in history] == ['pretrain'] * 2
    assert net.checksum('a') != _network().checksum('a')
    with pytest.raises(ConfigError):
        pretrain(_network(), ds, lr=-1.)


# -----------------------------------------------------------------------------
# extraction


def test_extract_features():
    """Test the extracted rows (determinism, duplicates, threads)."""
    ds = _red_blue(3)
    tiles = ds.tiles + [Tile(pixels=ds.tiles[0].pixels, source_id='dup')]
    net = _network()
    feat = extract_tile_features(net, tiles)
    assert feat.values.shape == (7, 16) and feat.dim == 16
    assert feat.ids[-1] == 'dup@00000_00000'
    np.testing.assert_array_equal(feat.values[0], feat.values[-1])
    threaded = extract_tile_features(net, tiles, n_threads=3)
    np.testing.assert_array_equal(feat.values, threaded.values)
    assert feat.ids == threaded.ids
    with pytest.raises(InvalidInput):
        extract_tile_features(net, [])


def test_extract_zero_network():
    net = _network()
    net = net.replace({k: np.zeros_like(v) for k, v in
                       net.tensors().items()})
    tile = Tile(pixels=np.zeros((8, 8, 3), dtype=np.uint8), source_id='z')
    feat = extract_tile_features(net, [tile])
    np.testing.assert_array_equal(feat.values, 0.)


def test_feature_matrix(tmp_path):
    fm = FeatureMatrix(['b', 'a'], np.array([[1., 2.], [3., 4.]]))
    path = str(tmp_path / 'f.pfv')
    fm.save(path)
    loaded = FeatureMatrix.load(path)
    assert loaded.ids == ['b', 'a']
    np.testing.assert_array_equal(loaded.values, fm.values)
    assert list(fm.to_frame().index) == ['b', 'a']
    with pytest.raises(InvalidInput):
        FeatureMatrix(['a', 'a'], np.zeros((2, 2)))


# -----------------------------------------------------------------------------
# patient pooling


def test_aggregate_patient():
    """Test the patient means."""
    fm = FeatureMatrix(['t1', 't2', 't3'],
                       np.array([[0., 2.], [2., 0.], [5., 5.]]))
    out = aggregate_patient(fm, {'t1': 'P1', 't2': 'P1', 't3': 'P0'})
    assert out.ids == ['P0', 'P1']
    np.testing.assert_array_equal(out.values, [[5., 5.], [1., 1.]])
    # one tile per patient
    single = aggregate_patient(fm, {'t1': 'A', 't2': 'B', 't3': 'C'})
    np.testing.assert_array_equal(single.values, fm.values)


def test_aggregate_permutation():
    """Test that the row order of the tiles does not matter."""
    rng = np.random.default_rng(0)
    values = rng.standard_normal((30, 4)).astype(np.float32)
    ids = [f"s@{k:05d}_00000" for k in range(30)]
    mapping = {k: f"P{i % 4}" for i, k in enumerate(ids)}
    ref = aggregate_patient(FeatureMatrix(ids, values), mapping)
    perm = rng.permutation(30)
    out = aggregate_patient(FeatureMatrix([ids[k] for k in perm],
                                          values[perm]), mapping)
    np.testing.assert_array_equal(ref.values, out.values)
    assert not np.isnan(out.values).any()


def test_aggregate_errors():
    fm = FeatureMatrix(['t1'], np.ones((1, 2)))
    with pytest.raises(EmptyPatient):
        aggregate_patient(fm, {'t1': 'P1'}, patient_ids=['P1', 'P2'])
    with pytest.raises(InvalidInput):
        aggregate_patient(fm, {'t2': 'P1'})
    tiles = [Tile(pixels=np.zeros((4, 4, 3), dtype=np.uint8), source_id='s',
                  patient_id='P7')]
    assert tile_patient_map(tiles) == {'s@00000_00000': 'P7'}
    with pytest.raises(InvalidInput):
        tile_patient_map([Tile(pixels=np.zeros((4, 4, 3), dtype=np.uint8),
                               source_id='s')])
