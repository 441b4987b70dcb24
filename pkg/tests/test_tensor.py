import numpy as np
import pytest

from flexv.tensor import (I4, U4, LayerSpec, PackedTensor, Precision, QuantParams, TensorError,
                          from_bytes, load_tensor, pack, random_tensor, reference_conv2d,
                          reference_im2col, reference_layer, reference_quantize, save_tensor,
                          to_bytes, unpack)


def test_pack_lsb_first():
    assert pack([1, 2, 3, 0], U4).data == bytes([0x21, 0x03])
    assert pack([-1, 1], I4).data == bytes([0x1F])
    assert pack([1, 2, 3, 0], Precision(2, False)).data == bytes([0b00111001])


def test_pack_rejects_out_of_range():
    with pytest.raises(TensorError):
        pack([16], U4)
    with pytest.raises(TensorError):
        pack([-9], I4)


def test_innermost_dimension_must_be_byte_aligned():
    with pytest.raises(TensorError):
        pack(list(range(3)) * 2, U4, (2, 3))


def test_precision_parse():
    assert Precision.parse("i4") == I4
    assert Precision.parse("u8").hi == 255
    assert Precision.parse("i2").lo == -2
    with pytest.raises(TensorError):
        Precision.parse("u3")


def test_quantize_clips():
    q = QuantParams(3, -5, 2, U4)
    assert reference_quantize(100, q) == 15
    assert reference_quantize(-100, q) == 0
    assert reference_quantize(7, q) == (21 - 5) >> 2


def test_conv_matches_naive_loop():
    rng = np.random.default_rng(1)
    spec = LayerSpec(5, 4, 4, 3, 3, 3, 2, 1, U4, I4)
    x = random_tensor(rng, spec.input_shape, U4)
    w = random_tensor(rng, spec.weight_shape, I4)
    acc = reference_conv2d(spec, x, w)
    xv = np.pad(x.values(), ((1, 1), (1, 1), (0, 0)))
    wv = w.values()
    for oy in range(spec.out_h):
        for ox in range(spec.out_w):
            win = xv[2 * oy:2 * oy + 3, 2 * ox:2 * ox + 3]
            for f in range(3):
                assert acc[oy, ox, f] == int((win * wv[f]).sum())


def test_im2col_row_is_window():
    rng = np.random.default_rng(2)
    spec = LayerSpec(4, 4, 8, 2, 3, 3, 1, 1)
    x = random_tensor(rng, spec.input_shape, spec.act)
    row = unpack(reference_im2col(spec, x, (0, 0)))
    xv = np.pad(x.values(), ((1, 1), (1, 1), (0, 0)))
    assert np.array_equal(row, xv[0:3, 0:3].reshape(-1))


def test_reference_layer_output_precision():
    rng = np.random.default_rng(3)
    spec = LayerSpec(3, 3, 8, 4, quant=QuantParams(1, 0, 4, U4))
    y = reference_layer(spec, random_tensor(rng, spec.input_shape, spec.act),
                        random_tensor(rng, spec.weight_shape, spec.weight))
    assert y.precision == U4 and y.shape == (3, 3, 4)


def test_fxvt_roundtrip(tmp_path):
    t = random_tensor(np.random.default_rng(4), (2, 3, 8), I4)
    assert from_bytes(to_bytes(t)) == t
    for name in ("t.fxvt", "t.json"):
        save_tensor(t, tmp_path / name)
        assert load_tensor(tmp_path / name) == t


def test_from_bytes_rejects_garbage():
    with pytest.raises(TensorError):
        from_bytes(b"NOPE" + bytes(16))


def test_packed_tensor_values_shape():
    t = pack(range(8), Precision(8, False), (2, 4))
    assert isinstance(t, PackedTensor)
    assert t.values().tolist() == [[0, 1, 2, 3], [4, 5, 6, 7]]
