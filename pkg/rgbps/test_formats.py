import numpy as np
import pytest
from PIL import Image

from rgbps.basis import PatchGeometry
from rgbps.common import InvalidInputError
from rgbps.formats import pfm, png, tables
from rgbps.formats.rig import read_rig, write_rig
from rgbps.model import LightingRig, NormalField, RgbImage


def test_pfm_roundtrip(tmp_path, rng):
    data = rng.normal(size=(5, 7, 3)).astype(np.float32)
    pfm.write_pfm(tmp_path / 'a.pfm', data)
    np.testing.assert_array_equal(pfm.read_pfm(tmp_path / 'a.pfm'), data)

    gray = rng.normal(size=(4, 3)).astype(np.float32)
    pfm.write_pfm(tmp_path / 'b.pfm', gray)
    np.testing.assert_array_equal(pfm.read_pfm(tmp_path / 'b.pfm')[..., 0], gray)


def test_pfm_layout(tmp_path):
    data = np.zeros((2, 3, 3), dtype=np.float32)
    data[0, 0] = (1.0, 2.0, 3.0)
    pfm.write_pfm(tmp_path / 'a.pfm', data)
    raw = (tmp_path / 'a.pfm').read_bytes()
    assert raw.startswith(b'PF\n3 2\n-1.0\n')
    body = np.frombuffer(raw[len(b'PF\n3 2\n-1.0\n'):], dtype='<f4')
    # the top row is stored last
    np.testing.assert_array_equal(body[9:12], [1.0, 2.0, 3.0])


def test_pfm_big_endian(tmp_path):
    values = np.arange(6, dtype='>f4')
    (tmp_path / 'be.pfm').write_bytes(b'Pf\n3 2\n1.0\n' + values.tobytes())
    np.testing.assert_array_equal(pfm.read_pfm(tmp_path / 'be.pfm')[..., 0], [[3, 4, 5], [0, 1, 2]])


@pytest.mark.parametrize('content', [
    b'P6\n1 1\n-1.0\n',
    b'PF\nwide\n-1.0\n',
    b'PF\n2 2\n-1.0\n' + b'\0' * 7,
    b'PF\n',
])
def test_pfm_malformed(tmp_path, content):
    (tmp_path / 'bad.pfm').write_bytes(content)
    with pytest.raises(InvalidInputError):
        pfm.read_pfm(tmp_path / 'bad.pfm')


def test_missing_file_names_the_path(tmp_path):
    with pytest.raises(InvalidInputError, match='nothere.pfm'):
        pfm.read_pfm(tmp_path / 'nothere.pfm')


def test_masked_image_roundtrip(tmp_path):
    data = np.full((2, 2, 3), 0.5)
    mask = np.array([[True, False], [True, True]])
    pfm.write_image(tmp_path / 'img.pfm', RgbImage(data, mask))
    image = pfm.read_image(tmp_path / 'img.pfm')
    np.testing.assert_array_equal(image.mask, mask)
    assert image.data[0, 1].tolist() == [0.0, 0.0, 0.0]
    np.testing.assert_allclose(image.data[mask], 0.5)


def test_normals_roundtrip_are_unit(tmp_path, rng):
    raw = rng.normal(size=(3, 3, 3))
    raw[..., 2] = np.abs(raw[..., 2]) + 0.1
    normals = NormalField(raw / np.linalg.norm(raw, axis=-1, keepdims=True))
    pfm.write_normals(tmp_path / 'n.pfm', normals)
    back = pfm.read_normals(tmp_path / 'n.pfm')
    assert back.mask.all()
    np.testing.assert_allclose(back.data, normals.data, atol=1e-6)
    np.testing.assert_allclose(np.linalg.norm(back.data, axis=-1), 1.0, atol=1e-12)


def test_rig_roundtrip(tmp_path):
    rig = LightingRig(np.column_stack([(1.0, 0.0, 0.5), (0.0, 1.0, 0.5), (0.2, 0.3, 1.0)]))
    write_rig(tmp_path / 'rig.txt', rig)
    assert (tmp_path / 'rig.txt').read_text().splitlines()[0].split() == ['1.0', '0.0', '0.5']
    np.testing.assert_array_equal(read_rig(tmp_path / 'rig.txt').matrix, rig.matrix)


def test_rig_is_column_major(tmp_path):
    (tmp_path / 'rig.txt').write_text('1 2 3  4 5 7  7 8 10\n')
    rig = read_rig(tmp_path / 'rig.txt')
    np.testing.assert_array_equal(rig.matrix[:, 0], [1, 2, 3])
    np.testing.assert_array_equal(rig.matrix[:, 2], [7, 8, 10])


@pytest.mark.parametrize('text', ['1 2 3', '1 2 3 4 5 6 7 8 x', '1 0 0 0 1 0 1 1 0'])
def test_bad_rig(tmp_path, text):
    (tmp_path / 'rig.txt').write_text(text)
    with pytest.raises(InvalidInputError):
        read_rig(tmp_path / 'rig.txt')


def test_normals_png(tmp_path):
    normals = NormalField(np.array([[[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]]), np.array([[True, False]]))
    png.write_normals_png(tmp_path / 'n.png', normals)
    pixels = np.asarray(Image.open(tmp_path / 'n.png'))
    assert pixels.shape == (1, 2, 3)
    assert pixels[0, 0].tolist() == [128, 128, 255]
    assert pixels[0, 1].tolist() == [0, 0, 0]


def test_fraction_png(tmp_path):
    png.write_fraction_png(tmp_path / 'f.png', np.array([[0.0, 0.5, 1.0]]))
    assert np.asarray(Image.open(tmp_path / 'f.png')).tolist() == [[0, 128, 255]]


def test_tables(tmp_path):
    tables.write_rows(tmp_path / 't.csv', ['a', 'b'], [(1, 0.1), (np.int64(2), np.float64(1 / 3))])
    rows = tables.read_rows(tmp_path / 't.csv')
    assert rows == [{'a': '1', 'b': '0.1'}, {'a': '2', 'b': repr(1 / 3)}]


def test_coefficient_table_header(tmp_path):
    tables.write_coefficients(tmp_path / 'c.csv', np.zeros(5), PatchGeometry(4, 2))
    header = (tmp_path / 'c.csv').read_text().splitlines()[0]
    assert header == 'patch,"a[0,1]","a[1,0]","a[0,2]","a[1,1]","a[2,0]"'
