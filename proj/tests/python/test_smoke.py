import math
from fractions import Fraction

import pytest

import abc_lab


def test_axial_round_trip_matches_closed_form():
    for theta, y in [(0.1, 0.3), (0.75, -0.9), (0.5, 0.0)]:
        x1, x2, x3 = abc_lab.axial_unproject(theta, y)
        r = math.sqrt(1 - y * y)
        assert x1 == pytest.approx(r * math.cos(2 * math.pi * theta), abs=1e-14)
        assert x2 == pytest.approx(r * math.sin(2 * math.pi * theta), abs=1e-14)
        assert x3 == pytest.approx(y, abs=1e-15)
        t2, y2 = abc_lab.axial_project(x1, x2, x3)
        assert abc_lab.cyl_distance(theta, y, t2, y2) < 1e-12


def test_disk_involution_is_an_involution():
    for p in [(0.3, 0.4), (-0.7, 0.1), (0.0, -0.99)]:
        q = abc_lab.disk_involution(*p)
        back = abc_lab.disk_involution(*q)
        assert back == pytest.approx(p, abs=1e-12)


def test_liouville_budget_against_fractions():
    angles = ["0/1", "1/4", "1076509/4306020"]
    a = [Fraction(s) for s in angles]
    for n in range(len(a) - 1):
        q = a[n].denominator
        assert q >= n
        assert abs(a[n + 1] - a[n]) < Fraction(1, 2**q * q**q)
    ok, violated, _ = abc_lab.liouville_certificate(angles)
    assert ok and violated == -1
    ok, violated, _ = abc_lab.liouville_certificate(["0/1", "1/2"])
    assert not ok and violated == 0


def test_first_stage_is_periodic_with_period_q():
    s1 = abc_lab.step(abc_lab.initial_stage())
    assert s1.n == 1
    a = Fraction(s1.alpha)
    # Liouville budget from alpha_0 = 0 with q_0 = 1, and the period matches the denominator.
    assert 0 < a < Fraction(1, 2)
    assert a.denominator == s1.q
    assert s1.certificates["symplectic"] <= 1e-6
    theta, y = 0.3, 0.2
    t4, y4 = s1.iterate(theta, y, s1.q)
    assert abc_lab.cyl_distance(theta, y, t4, y4) < 1e-10
    t1, y1 = s1.iterate(theta, y, 1)
    assert abc_lab.cyl_distance(theta, y, t1, y1) > 1e-3


def test_glue_report_small_grid():
    g = abc_lab.glue_report(grid=16)
    assert g["det_residual"] <= 1e-6
    assert g["support_moved"] == 0
    assert g["sigma_residual"] <= 1e-10
    assert g["mass_residual"] <= 1e-8


def test_twisted_structure_is_not_integrable():
    p = abc_lab.random_domain_points(2.0, 1, 7)[0]
    r = [abc_lab.twisted_nijenhuis(1.0, p, h) for h in (1e-2, 1e-3, 1e-4)]
    assert min(r) >= 1e-2
    assert max(r) / min(r) < 1.1


def test_config_hash_ignores_key_order():
    a = {"stages": "2", "eta": "0.04", "grid_n": "32"}
    b = {"grid_n": "32", "eta": "0.04", "stages": "2"}
    assert abc_lab.config_hash(a) == abc_lab.config_hash(b)
    with pytest.raises(abc_lab.ConfigError):
        abc_lab.config_hash({"eta": "0.3", "eps": "0.2"})


def test_run_diagnose_export(tmp_path):
    out = tmp_path / "run"
    m = abc_lab.run({"stages": "1", "output_dir": str(out)})
    assert m["status"] == "complete"
    assert m["stage_files"] == ["stage_1.json"]
    ok, text = abc_lab.diagnose(out, "liouville", 1)
    assert ok and "pass 1" in text
    with pytest.raises(abc_lab.UnknownCheck):
        abc_lab.diagnose(out, "bogus", 0)
    with pytest.raises(abc_lab.MissingStage):
        abc_lab.diagnose(out, "symplectic", 5)
    orbit = tmp_path / "orbit.txt"
    abc_lab.export_orbit(out, 0, out=orbit)
    rows = [l for l in orbit.read_text().splitlines() if not l.startswith("#")]
    assert rows == ["0 0 0"]
