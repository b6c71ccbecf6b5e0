import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semio.iomodel import (PRESETS, MachineSpec, ModelError, ProblemSpec, ReconcileError,
                           UnknownPresetError, cost_report, implementation_work, intensity_remat,
                           intensity_stored, load_machine, model_machine_defaults, n_gs_count,
                           q_impl, q_lower_cg, q_lower_general, q_lower_sem, reconcile,
                           remat_work_ratios, t_c, work_counts)
from semio.mesh import box_mesh
from semio.solver import SemSystem, assemble_rhs, cg_solve, manufactured_forcing


def machine(S=0.0, beta_eff=16.0, beta_gs=0.53, f=204e6, power=None):
    return MachineSpec("test", 32, beta_eff, beta_gs, f, S, power)


def test_n_gs_values():
    assert n_gs_count(ProblemSpec(1, 7)) == 512 * 296 / 512
    assert n_gs_count(ProblemSpec(5, 7)) / ProblemSpec(5, 7).n == 0.578125
    assert n_gs_count(ProblemSpec(3, 1)) == ProblemSpec(3, 1).n
    assert n_gs_count(ProblemSpec(1, 15)) == 4096 - 14**3 == 1352
    # approaches 6/(N+1) from below
    for N in (15, 31, 63):
        r = n_gs_count(ProblemSpec(1, N)) / (N + 1) ** 3
        assert r < 6 / (N + 1) and r == pytest.approx(6 / (N + 1), rel=6 / (N + 1))


def test_lower_bounds():
    p1 = ProblemSpec(10, 3, 1)
    n = p1.n
    assert q_lower_cg(ProblemSpec(10, 3, 0), machine()) == 0
    assert q_lower_cg(p1, machine()) == 6 * n
    assert q_lower_cg(p1, machine(S=1.5 * n)) == 0
    assert q_lower_sem(p1, machine()) == 13 * n
    assert q_lower_sem(ProblemSpec(10, 3, 2), machine()) == 26 * n
    assert q_lower_sem(p1, machine(S=13 * n / 4)) == 0


def test_general_bound_branches():
    p = ProblemSpec(4, 5, 3)
    n, S = p.n, 100.0
    assert q_lower_general(p, machine(S), 0) == q_lower_cg(p, machine(S))
    assert q_lower_general(p, machine(S), n) == 3 * (6 * n - 4 * S + 2 * n)
    # m = 7n picks the m + n branch: 14n, one n above the SEM bound
    assert q_lower_general(p, machine(), 7 * n) == 3 * 14 * n
    with pytest.raises(ModelError):
        q_lower_general(p, machine(), -1)


def test_q_impl():
    p = ProblemSpec(32768, 7, 1)
    assert p.n == 16_777_216
    assert q_impl(p, "stored") == 354_942_976
    assert q_impl(ProblemSpec(32768, 7, 0), "stored") == 0
    assert q_impl(p, "remat") / q_impl(p, "stored") == pytest.approx(16.15625 / 21.15625)
    assert q_impl(p, "remat") / q_impl(p, "stored") == pytest.approx(0.7636, abs=1e-4)


def test_work_and_intensity():
    p = ProblemSpec(1, 7)
    assert work_counts(p, "stored")["w_alx"] / p.n == 111
    assert intensity_stored(7) == 13.875
    assert intensity_remat(7) == 112.0
    assert work_counts(p, "stored")["implementation_total"] == implementation_work(p, "stored")


def test_t_c_reference_configuration():
    tm = t_c(ProblemSpec(32768, 7, 1), model_machine_defaults("fpga-fp64-measured"), "stored")
    assert tm.cycles == pytest.approx(57.57e6, rel=1e-3)
    assert tm.seconds == pytest.approx(0.282, rel=2e-3)
    e = t_c(ProblemSpec(32768, 7, 1000), model_machine_defaults("fpga-fp64-measured"), "stored").energy_joules
    assert e == pytest.approx(22.2e3, rel=2e-3)
    assert abs(e - 21.8e3) / 21.8e3 < 0.02


def test_t_c_without_gather_penalty():
    p = ProblemSpec(8, 4, 3)
    tm = t_c(p, machine(beta_eff=10, beta_gs=10), "remat")
    assert tm.cycles == pytest.approx(q_impl(p, "remat") / 10)


def test_presets():
    assert model_machine_defaults("fpga-fp64-stored").beta_eff == 20
    assert model_machine_defaults("fpga-fp32-remat").beta_eff == 35
    assert model_machine_defaults("fpga-fp32-stored").beta_eff == 40
    for name, m in PRESETS.items():
        if not name.endswith("measured"):
            assert m.beta_gs == 0.47
    assert 1 / 2.125 == pytest.approx(0.47, abs=0.005)
    with pytest.raises(UnknownPresetError):
        model_machine_defaults("gpu")


def test_machine_json_override(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"name": "fpga-fp64-stored", "beta_gs": 1.0}))
    m = load_machine(str(path))
    assert m.beta_gs == 1.0 and m.beta_eff == 20
    path.write_text(json.dumps({"name": "new", "beta": 8, "beta_eff": 4, "beta_gs": 1,
                                "frequency_hz": 1e9, "fast_mem_words": 1024}))
    assert load_machine(str(path)).power_watts is None
    path.write_text(json.dumps({"name": "x", "colour": 3}))
    with pytest.raises(ModelError):
        load_machine(str(path))
    with pytest.raises(UnknownPresetError):
        load_machine("nope")


def test_machine_invariants():
    with pytest.raises(ModelError):
        MachineSpec("bad", 10, 20, 1, 1e9)
    with pytest.raises(ModelError):
        MachineSpec("bad", 10, 5, 0, 1e9)


def test_remat_ratios():
    r = remat_work_ratios(8)
    assert r["solver"] == pytest.approx(376 / 133)
    assert r["local_kernel"] == pytest.approx(366 / 123)
    assert r["solver"] < 3 and r["local_kernel"] < 3


problems = st.builds(ProblemSpec, st.integers(1, 10**6), st.integers(1, 12), st.integers(0, 1000))


@settings(max_examples=200, deadline=None)
@given(problems, st.floats(0, 1e8))
def test_bound_ordering(prob, S):
    m = machine(S)
    assert q_lower_cg(prob, m) <= q_lower_sem(prob, m) <= q_impl(prob, "stored")
    assert q_lower_general(prob, m, 0) == q_lower_cg(prob, m)
    if prob.iters:
        assert q_impl(prob, "remat") < q_impl(prob, "stored")
    assert q_lower_sem(prob, machine()) <= q_impl(prob, "stored")


@settings(max_examples=200, deadline=None)
@given(st.builds(ProblemSpec, st.integers(1, 10**5), st.integers(1, 12), st.integers(1, 1000)),
       st.floats(0.1, 30), st.floats(0.01, 5), st.floats(1.01, 2))
def test_t_c_monotone_and_linear(prob, be, bg, k):
    base = t_c(prob, machine(beta_eff=be, beta_gs=bg), "stored").cycles
    assert t_c(prob, machine(beta_eff=min(be * k, 32), beta_gs=bg), "stored").cycles < base or be * k > 32
    assert t_c(prob, machine(beta_eff=be, beta_gs=bg * k), "stored").cycles < base
    doubled = ProblemSpec(prob.E, prob.N, 2 * prob.iters)
    assert t_c(doubled, machine(beta_eff=be, beta_gs=bg), "stored").cycles == pytest.approx(2 * base)
    slow = t_c(prob, machine(beta_eff=be, beta_gs=bg, f=1e8), "stored")
    fast = t_c(prob, machine(beta_eff=be, beta_gs=bg, f=2e8), "stored")
    assert fast.cycles == slow.cycles and fast.seconds == pytest.approx(slow.seconds / 2)


def test_cost_report_nonnegative_and_ordered():
    rep = cost_report(ProblemSpec(64, 7, 10), model_machine_defaults("fpga-fp64-stored"), "stored")
    d = rep.as_dict()
    assert all(v is None or v >= 0 for v in d.values())
    assert rep.q_lower_cg <= rep.q_lower_sem <= rep.q_axcg


@pytest.mark.parametrize("variant", ["stored", "remat"])
def test_reconcile_ledger_against_model(variant):
    s = SemSystem.build(box_mesh(2, 2, 2), 7, variant)
    _, stats = cg_solve(s, assemble_rhs(s, manufactured_forcing), rel_tol=1e-6)
    rep = reconcile(stats, s, model_machine_defaults("fpga-fp64-stored"))
    assert rep["words"]["deviation_pct"] == 0
    assert all(t["deviation_pct"] == 0 for t in rep["terms"].values())
    if variant == "stored":
        assert rep["flops"]["operator_deviation_pct"] == 0
    else:
        assert abs(rep["flops"]["solver_deviation_pct"]) < 25
    with pytest.raises(ReconcileError):
        reconcile(stats, s, prob=ProblemSpec(8, 6, stats.iterations))


def test_problem_spec_validation():
    with pytest.raises(ModelError):
        ProblemSpec(0, 3)
    assert ProblemSpec(2, 3, d=2).n == 2 * 16
    assert np.isclose(n_gs_count(ProblemSpec(1, 3, d=2)), 16 * (16 - 4) / 16)
