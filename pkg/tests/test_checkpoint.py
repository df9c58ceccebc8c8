import numpy as np
import pytest

from dasnet import checkpoint, nn
from dasnet.compression import quantize_weights_linear8
from dasnet.errors import DataFormatError, MissingArtifactError


def assert_networks_equal(a, b, exact=True):
    assert a.name == b.name and a.seed == b.seed
    assert a.epochs_completed == b.epochs_completed
    assert len(a.specs) == len(b.specs)
    for sa, sb in zip(a.specs, b.specs):
        assert (sa.kind, sa.name, sa.activation, sa.wta_eligible) == (
            sb.kind,
            sb.name,
            sb.activation,
            sb.wta_eligible,
        )
        assert sa.wta_rate == sb.wta_rate
    for wa, wb in zip(a.weights + a.biases, b.weights + b.biases):
        if exact:
            assert np.array_equal(wa, wb)
        else:
            assert wa.shape == wb.shape


class TestRoundtrip:
    @pytest.mark.parametrize("arch", ["mlp3", "lenet4", "convnet5"])
    def test_float_payload_exact(self, arch, tmp_path):
        net = nn.build_network(arch, seed=11)
        net.epochs_completed = 4
        path = tmp_path / f"{arch}.ckpt"
        checkpoint.save(net, path)
        assert_networks_equal(net, checkpoint.load(path))

    def test_rates_roundtrip(self, tmp_path):
        net = nn.build_network("mlp3", seed=0)
        net.set_rates({"fc1": 0.21, "fc2": 0.375})
        path = tmp_path / "rated.ckpt"
        checkpoint.save(net, path)
        loaded = checkpoint.load(path)
        rates = loaded.rates()
        assert rates["fc1"] == 0.21  # exact: rates persist as float64
        assert rates["fc2"] == 0.375
        assert "fc3" not in rates

    def test_quantized_payload(self, tmp_path):
        net = nn.build_network("mlp3", seed=1)
        q = quantize_weights_linear8(net)
        path = tmp_path / "q.ckpt"
        checkpoint.save(net, path, quantized_layers=q.layers)
        loaded = checkpoint.load(path)
        # the stored weights are the dequantized values, bit for bit
        for wq, wl in zip(q.network.weights, loaded.weights):
            assert np.array_equal(wq, wl)
        # int8 payload shrinks the file roughly 4x
        checkpoint.save(net, tmp_path / "f.ckpt")
        dense_size = (tmp_path / "f.ckpt").stat().st_size
        assert path.stat().st_size < 0.3 * dense_size

    def test_byte_identical_saves(self, tmp_path):
        net = nn.build_network("lenet4", seed=2)
        checkpoint.save(net, tmp_path / "a.ckpt")
        checkpoint.save(net, tmp_path / "b.ckpt")
        assert (tmp_path / "a.ckpt").read_bytes() == (
            tmp_path / "b.ckpt"
        ).read_bytes()


class TestCorruption:
    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            checkpoint.load(tmp_path / "nope.ckpt")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        net = nn.build_network("mlp3")
        checkpoint.save(net, path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"XXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(DataFormatError, match="magic"):
            checkpoint.load(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "v.ckpt"
        checkpoint.save(nn.build_network("mlp3"), path)
        blob = bytearray(path.read_bytes())
        blob[4] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(DataFormatError, match="version"):
            checkpoint.load(path)

    def test_trailing_bytes_detected(self, tmp_path):
        path = tmp_path / "t.ckpt"
        checkpoint.save(nn.build_network("mlp3"), path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(DataFormatError, match="trailing"):
            checkpoint.load(path)


def test_forward_agreement_after_roundtrip(tmp_path):
    net = nn.build_network("mlp3", seed=3)
    net.set_rates({"fc1": 0.3, "fc2": 0.3})
    path = tmp_path / "net.ckpt"
    checkpoint.save(net, path)
    loaded = checkpoint.load(path)
    x = np.random.default_rng(0).random((4, 784)).astype(np.float32)
    a, _ = nn.forward_batch(net, x, use_masks=True)
    b, _ = nn.forward_batch(loaded, x, use_masks=True)
    assert np.array_equal(a, b)
