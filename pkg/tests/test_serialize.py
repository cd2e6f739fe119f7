import numpy as np
import pytest

from depthloc.network import Architecture, init_model, predict
from depthloc.ntk import KernelSpec, ntk_fit, ntk_predict
from depthloc.numerics import RngStream
from depthloc.serialize import load_mlp, load_ntk, save_mlp, save_ntk
from depthloc.targets import TargetSpec, make_dataset, monomial


class TestMlpRoundTrip:
    @pytest.mark.parametrize("L,init", [(1, "glorot"), (3, "ntk_param")])
    def test_bit_exact(self, L, init, tmp_path):
        arch = Architecture(6, L, 9, init, 0.1)
        m = init_model(arch, RngStream(1, L))
        p = str(tmp_path / "m.bin")
        save_mlp(m, p)
        m2 = load_mlp(p)
        assert m2.arch == arch
        for a, b in zip(m.weights, m2.weights):
            assert np.array_equal(a, b)
        for a, b in zip(m.biases, m2.biases):
            assert np.array_equal(a, b)
        X = RngStream(2, 0).normal(10, 6)
        assert np.array_equal(predict(m, X), predict(m2, X))

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk.bin"
        p.write_bytes(b"NOTAMODELxxxxxxxxxxx")
        with pytest.raises(ValueError):
            load_mlp(str(p))

    def test_truncated(self, tmp_path):
        arch = Architecture(4, 2, 5)
        m = init_model(arch, RngStream(3, 0))
        p = str(tmp_path / "m.bin")
        save_mlp(m, p)
        with open(p, "rb") as f:
            data = f.read()
        with open(p, "wb") as f:
            f.write(data[:-16])
        with pytest.raises(ValueError, match="truncated"):
            load_mlp(p)


class TestNtkRoundTrip:
    def test_bit_exact_predictions(self, tmp_path):
        spec = TargetSpec(monomial(2), "local", 5, (1, 2))
        ds = make_dataset(spec, 20, RngStream(4, 0))
        model = ntk_fit(ds, KernelSpec(2, 0.1, 5))
        p = str(tmp_path / "ntk.bin")
        save_ntk(model, p)
        m2 = load_ntk(p)
        assert m2.spec == model.spec
        assert m2.jitter_used == model.jitter_used
        assert np.array_equal(m2.X, model.X)
        assert np.array_equal(m2.alpha, model.alpha)
        xq = RngStream(5, 0).normal(7, 5)
        assert np.array_equal(ntk_predict(model, xq), ntk_predict(m2, xq))

    def test_wrong_container(self, tmp_path):
        arch = Architecture(4, 1, 3)
        m = init_model(arch, RngStream(6, 0))
        p = str(tmp_path / "m.bin")
        save_mlp(m, p)
        with pytest.raises(ValueError):
            load_ntk(p)
