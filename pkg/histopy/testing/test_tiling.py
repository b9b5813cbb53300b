"""Test tiling and dataset loading."""
import os.path as op

import numpy as np
import pytest

from histopy.errors import InvalidInput, InvalidDataset, ItemError, IoError
from histopy.io import (load_class_dataset, load_patient_manifest,
                        write_image, write_features, read_features,
                        read_checkpoint, write_checkpoint, read_target_table,
                        write_text)
from histopy.tiling import (Tile, rescale_to_mpp, tile_image, content_filter,
                            make_tile_id)


def _image(h, w, seed=0):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


# -----------------------------------------------------------------------------
# rescaling


def test_rescale_to_mpp():
    img = _image(448, 448)
    same = rescale_to_mpp(img, .25, .25)
    np.testing.assert_array_equal(same, img)
    assert rescale_to_mpp(img, .5, .25).shape == (896, 896, 3)
    assert rescale_to_mpp(_image(100, 100), .25, .5).shape == (50, 50, 3)
    with pytest.raises(InvalidInput):
        rescale_to_mpp(_image(2, 2), .25, 50.)
    with pytest.raises(InvalidInput):
        rescale_to_mpp(img, 0., .25)


# -----------------------------------------------------------------------------
# tiling


def test_tile_image_counts():
    """Test the number, order and position of the tiles."""
    tiles = tile_image(_image(896, 896), 224, 224, source_id='img')
    assert len(tiles) == 16
    assert [t.grid_xy for t in tiles[0:5]] == [(0, 0), (1, 0), (2, 0),
                                               (3, 0), (0, 1)]
    assert tiles[-1].grid_xy == (3, 3)
    assert len(tile_image(_image(224, 224))) == 1
    assert len(tile_image(_image(223, 224))) == 0
    # generic count formula
    for (h, w, size, stride) in [(100, 130, 32, 20), (64, 64, 16, 16),
                                 (50, 90, 50, 7)]:
        n = ((w - size) // stride + 1) * ((h - size) // stride + 1)
        assert len(tile_image(_image(h, w), size, stride)) == n


def test_tile_content():
    """Test that the tile pixels match the source image."""
    img = _image(64, 96, seed=2)
    tiles = tile_image(img, 32, 32, source_id='s', patient_id='P1')
    t = tiles[4]
    assert t.grid_xy == (1, 1) and t.patient_id == 'P1'
    np.testing.assert_array_equal(t.pixels, img[32:64, 32:64])
    assert t.tile_id == make_tile_id('s', (1, 1)) == 's@00001_00001'
    # ids sort in row-major order
    ids = [k.tile_id for k in tiles]
    assert ids == sorted(ids)


def test_tile_errors():
    with pytest.raises(InvalidInput):
        tile_image(_image(10, 10), 0, 1)
    with pytest.raises(InvalidInput):
        Tile(pixels=np.zeros((4, 5, 3), dtype=np.uint8), source_id='x')


def test_content_filter():
    white = np.full((10, 10, 3), 255, dtype=np.uint8)
    gray = np.full((10, 10, 3), 128, dtype=np.uint8)
    assert not content_filter(white, 220, .9)
    assert content_filter(gray, 220, .9)
    half = gray.copy()
    half[0:5] = 255
    assert content_filter(half, 220, .5)
    assert not content_filter(half, 220, .49)
    # a single dark channel is enough to be tissue
    tinted = white.copy()
    tinted[..., 0] = 100
    assert content_filter(Tile(pixels=tinted, source_id='t'), 220, .5)
    with pytest.raises(InvalidInput):
        content_filter(gray, 220, 0.)


# -----------------------------------------------------------------------------
# class dataset / manifest


def _class_dataset(root, counts):
    for k, (name, n) in enumerate(counts.items()):
        for i in range(n):
            write_image(op.join(root, name, f"img_{i}.png"),
                        _image(16, 16, seed=10 * k + i))


def test_load_class_dataset(tmp_path):
    root = str(tmp_path / 'data')
    _class_dataset(root, {'TUM': 2, 'ADI': 3})
    ds = load_class_dataset(root)
    assert len(ds) == 5 and ds.class_names == ['ADI', 'TUM']
    np.testing.assert_array_equal(ds.labels, [0, 0, 0, 1, 1])
    assert ds.as_batch().shape == (5, 16, 16, 3)
    assert ds.as_batch().max() <= 1.
    # deterministic
    ds2 = load_class_dataset(root)
    assert ds.tile_ids == ds2.tile_ids
    for a, b in zip(ds.tiles, ds2.tiles):
        np.testing.assert_array_equal(a.pixels, b.pixels)


def test_load_class_dataset_errors(tmp_path):
    root = str(tmp_path / 'one')
    _class_dataset(root, {'ADI': 2})
    with pytest.raises(InvalidDataset):
        load_class_dataset(root)
    root = str(tmp_path / 'bad')
    _class_dataset(root, {'ADI': 1, 'TUM': 1})
    write_text(op.join(root, 'TUM', 'broken.png'), 'not an image')
    with pytest.raises(ItemError) as e:
        load_class_dataset(root)
    assert e.value.path.endswith('broken.png')


def test_load_patient_manifest(tmp_path):
    path = str(tmp_path / 'manifest.csv')
    write_text(path, "patient_id,image_path,mpp\nP1,a.png,0.25\n"
               "P2,/abs/b.png,0.5\n")
    man = load_patient_manifest(path)
    assert len(man) == 2 and man.patient_ids == ['P1', 'P2']
    assert man.image_paths[0] == op.join(str(tmp_path), 'a.png')
    assert man.image_paths[1] == '/abs/b.png'
    np.testing.assert_array_equal(man.mpp, [.25, .5])
    write_text(path, "patient_id,image_path,mpp\nP1,a.png,-1\n")
    with pytest.raises(InvalidDataset):
        load_patient_manifest(path)
    write_text(path, "patient_id,image_path,res\nP1,a.png,1\n")
    with pytest.raises(InvalidDataset):
        load_patient_manifest(path)
    with pytest.raises(IoError):
        load_patient_manifest(str(tmp_path / 'missing.csv'))


# -----------------------------------------------------------------------------
# binary files


def test_features_file(tmp_path):
    path = str(tmp_path / 'feat.pfv')
    values = np.random.default_rng(0).standard_normal((3, 4))
    write_features(path, ['a', 'b', 'c'], values)
    ids, read = read_features(path)
    assert ids == ['a', 'b', 'c'] and read.dtype == np.float32
    np.testing.assert_array_equal(read, values.astype(np.float32))
    assert op.isfile(str(tmp_path / 'feat.csv'))
    # truncated / foreign files
    with open(path, 'rb') as f:
        buf = f.read()
    with open(path, 'wb') as f:
        f.write(buf[:-3])
    with pytest.raises(IoError):
        read_features(path)
    with pytest.raises(IoError):
        read_checkpoint(path)


def test_checkpoint_file(tmp_path):
    path = str(tmp_path / 'net.hfnn')
    tensors = {'a.w': np.arange(6.).reshape(2, 3), 'b.b': np.ones((4,))}
    write_checkpoint(path, tensors)
    read = read_checkpoint(path)
    assert list(read.keys()) == ['a.w', 'b.b']
    np.testing.assert_array_equal(read['a.w'], tensors['a.w'])


def test_target_table(tmp_path):
    path = str(tmp_path / 'mut.csv')
    write_text(path, "patient_id,TP53,KRAS\nP2,1,0\nP1,0,1\n")
    df = read_target_table(path, binary=True)
    assert list(df.index) == ['P1', 'P2']
    assert df.loc['P2', 'TP53'] == 1.
    write_text(path, "patient_id,TP53\nP1,2\n")
    with pytest.raises(InvalidDataset):
        read_target_table(path, binary=True)
    write_text(path, "patient_id,TP53\nP1,1\nP1,0\n")
    with pytest.raises(InvalidDataset):
        read_target_table(path)
