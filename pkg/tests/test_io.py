import numpy as np
import pytest

from bddcflow import io as fio
from bddcflow.errors import FormatError, InvalidArgumentError


def test_perm_roundtrip_byte_identical(tmp_path):
    rng = np.random.default_rng(0)
    counts = (5, 4)
    k = 10.0 ** rng.uniform(-6, 6, (20, 2))
    p1 = tmp_path / "a.perm"
    p2 = tmp_path / "b.perm"
    fio.write_perm(p1, counts, k)
    counts2, perm = fio.read_perm(p1)
    assert counts2 == counts
    np.testing.assert_array_equal(perm.k, k)
    fio.write_perm(p2, counts2, perm.k)
    assert p1.read_bytes() == p2.read_bytes()


def test_perm_header_errors(tmp_path):
    p = tmp_path / "bad.perm"
    p.write_text("PERM 2 2\n1 1\n1 1\n")
    with pytest.raises(FormatError):
        fio.read_perm(p)
    p.write_text("XERM 2 2 2\n")
    with pytest.raises(FormatError):
        fio.read_perm(p)
    p.write_text("PERM 2 2 1\n1.0 1.0\n")
    with pytest.raises(FormatError):   # wrong row count
        fio.read_perm(p)
    p.write_text("PERM 2 2 1\n1.0 -1.0\n2.0 3.0\n")
    with pytest.raises(FormatError):   # non-positive value
        fio.read_perm(p)


def test_spe10_layer_slice(tmp_path):
    nx, ny, nz = fio.SPE10_SHAPE
    n = nx * ny * nz
    # kx = cell index + 1, ky = +2e6 offset, kz = +4e6 so slices are
    # recognizable; write 6 values per line like the distributed file
    vals = np.concatenate([np.arange(n) + 1.0,
                           np.arange(n) + 2e6,
                           np.arange(n) + 4e6])
    raw = tmp_path / "raw.dat"
    with open(raw, "w") as fh:
        for i in range(0, len(vals), 6):
            fh.write(" ".join(str(v) for v in vals[i:i + 6]) + "\n")

    out = tmp_path / "layer85.perm"
    counts = fio.convert_spe10(raw, out, layer=85)
    assert counts == (60, 220)
    counts2, perm = fio.read_perm(out)
    assert perm.k.shape == (13200, 2)
    # first cell of layer 85 is flat index 84*60*220 of each block
    base = 84 * 60 * 220
    assert perm.k[0, 0] == base + 1.0
    assert perm.k[0, 1] == base + 2e6
    assert perm.k[1, 0] == base + 2.0     # x-fastest


def test_spe10_box_cutout(tmp_path):
    nx, ny, nz = fio.SPE10_SHAPE
    n = nx * ny * nz
    vals = np.concatenate([np.arange(n) + 1.0] * 3)
    raw = tmp_path / "raw.dat"
    np.savetxt(raw, vals.reshape(-1, 4))
    out = tmp_path / "box.perm"
    counts = fio.convert_spe10(raw, out, box=((10, 20, 55), (30, 30, 30)))
    assert counts == (30, 30, 30)
    _, perm = fio.read_perm(out)
    assert perm.k.shape == (27000, 3)
    assert perm.k[0, 0] == 55 * nx * ny + 20 * nx + 10 + 1.0


def test_spe10_wrong_count(tmp_path):
    raw = tmp_path / "short.dat"
    raw.write_text("1.0 2.0 3.0\n")
    with pytest.raises(FormatError, match="expected"):
        fio.convert_spe10(raw, tmp_path / "x.perm", layer=1)


def test_spe10_bad_slice(tmp_path):
    nx, ny, nz = fio.SPE10_SHAPE
    vals = np.ones(3 * nx * ny * nz)
    raw = tmp_path / "raw.dat"
    np.savetxt(raw, vals.reshape(-1, 10))
    with pytest.raises(InvalidArgumentError):
        fio.convert_spe10(raw, tmp_path / "x.perm", layer=86)
    with pytest.raises(InvalidArgumentError):
        fio.convert_spe10(raw, tmp_path / "x.perm",
                          box=((40, 0, 0), (30, 30, 30)))
    with pytest.raises(InvalidArgumentError):
        fio.convert_spe10(raw, tmp_path / "x.perm")


def test_synthetic_constant_and_checkerboard():
    k = fio.synthetic_field("constant", (4, 4), value=3.0)
    np.testing.assert_array_equal(k, np.full((16, 2), 3.0))
    k = fio.synthetic_field("checkerboard", (4, 4), contrast=1e6,
                            blocks=(2, 2))
    vals = k[:, 0].reshape(4, 4)
    assert vals[0, 0] == 1.0
    assert vals[0, 2] == 1e6
    assert vals[2, 2] == 1.0


def test_synthetic_log_uniform_range_and_determinism():
    k1 = fio.synthetic_field("log-uniform", (10, 10), seed=42, orders=6.0)
    k2 = fio.synthetic_field("log-uniform", (10, 10), seed=42, orders=6.0)
    np.testing.assert_array_equal(k1, k2)
    assert k1.min() >= 1e-3 and k1.max() <= 1e3
    k3 = fio.synthetic_field("log-uniform", (10, 10), seed=43)
    assert not np.array_equal(k1, k3)


def test_synthetic_channels_and_smooth():
    k = fio.synthetic_field("channels", (20, 60), seed=1, orders=6.0)
    assert k.shape == (1200, 2)
    assert k.max() / k.min() >= 1e3    # strong contrast
    k = fio.synthetic_field("smooth", (20, 20), seed=2, orders=3.0)
    assert k.max() / k.min() <= 10.0 ** 3.5
    assert np.all(k > 0)
    with pytest.raises(InvalidArgumentError):
        fio.synthetic_field("perlin", (4, 4))


def test_report_csv_format(tmp_path):
    rows = [dict(tau=float("inf"), eps0=0.5, eps_star=0.1,
                 omega_tilde=2.5, n_c=33, it=11, kappa=2.79),
            dict(tau="ms", eps0=None, eps_star=None, omega_tilde=None,
                 n_c=604, it=297, kappa=1e6)]
    path = tmp_path / "r.csv"
    fio.write_report_csv(path, rows)
    lines = path.read_text().splitlines()
    assert lines[0] == "tau,eps0,eps_star,omega_tilde,n_c,it,kappa"
    assert lines[1].startswith("inf,0.5,0.1,2.5,33,11,")
    assert lines[2] == "ms,,,,604,297,1000000.0"


def test_residuals_and_spectrum_csv(tmp_path):
    path = tmp_path / "res.csv"
    fio.write_residuals_csv(path, [1.0, 0.5, 1e-7])
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,relres"
    assert lines[1] == "0,1.0"
    assert len(lines) == 4
    path = tmp_path / "spec.csv"
    fio.write_spectrum_csv(path, [1.0, 2.5])
    assert path.read_text().splitlines()[0] == "i,lambda"


def test_atomic_write_leaves_no_tmp(tmp_path):
    path = tmp_path / "out.csv"
    fio.write_residuals_csv(path, [1.0])
    assert path.exists()
    assert list(tmp_path.glob("*.tmp")) == []
