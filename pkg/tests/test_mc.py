import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chi2_contingency

from tricolor.lattice import LatticeSpec, build_lattice
from tricolor.mc import (EquilibrationError, EquilibrationStatus, LogBinnedSeries, ReplicaEnsemble, RunConfig,
                         SampleRun, TemperatureLadder, _exchange, check_equilibration, derive_seed,
                         metropolis_sweep, pt_exchange, run_disorder_sample, stream_states, uniform)
from tricolor.model import (CouplingSet, NoiseParameters, clean_disorder, lattice_interactions, make_interactions,
                            sample_disorder)
from tricolor.observables import batch_means_error


@pytest.fixture(scope="module")
def inter32():
    g = build_lattice(LatticeSpec(3, 2))
    return lattice_interactions(g, sample_disorder(g, NoiseParameters(0.2), 5), CouplingSet())


@pytest.fixture(scope="module")
def inter31():
    g = build_lattice(LatticeSpec(3, 1, degenerate_ok=True))
    return lattice_interactions(g, clean_disorder(g), CouplingSet())


def field_system(h):
    return make_interactions(1, [[0]], [1], [h], loops=[[0]])


# ----------------------------------------------------------------- seeding


def test_derive_seed_deterministic():
    a = derive_seed(5, 1, 2, 3).generate_state(4)
    b = derive_seed(5, 1, 2, 3).generate_state(4)
    c = derive_seed(5, 1, 2, 4).generate_state(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_stream_states_distinct():
    s = stream_states(derive_seed(1, 0), 16)
    assert s.shape == (17, 4) and s.dtype == np.uint64
    assert len({tuple(r) for r in s.tolist()}) == 17


def test_uniform_range_and_mean():
    s = stream_states(derive_seed(3), 1)
    u = np.array([uniform(s, 0) for _ in range(200_000)])
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 5 * math.sqrt(1 / 12 / len(u))


# ------------------------------------------------------------------ ladder


def test_ladder_linear_geometric():
    lad = TemperatureLadder(1.2, 2.0, 64)
    T = lad.temperatures
    assert len(T) == 64 and T[0] == 1.2 and T[-1] == 2.0
    assert np.allclose(np.diff(T), 0.8 / 63)
    G = TemperatureLadder(1.0, 4.0, 3, "geometric").temperatures
    assert np.allclose(G, [1.0, 2.0, 4.0])
    assert np.allclose(lad.betas, 1 / T)


@pytest.mark.parametrize("args", [(0.0, 1.0, 4), (2.0, 1.0, 4), (1.0, 2.0, 1), (1.0, 2.0, 4, "cubic")])
def test_ladder_rejects(args):
    with pytest.raises(ValueError):
        TemperatureLadder(*args)


def test_explicit_ladder():
    assert TemperatureLadder.explicit([0.8, 1.5, 3.0]).n_T == 3
    with pytest.raises(ValueError):
        TemperatureLadder.explicit([1.0, 0.9])


@pytest.mark.parametrize("kw", [dict(b=0), dict(b=3, interval=0), dict(b=3, n_samples=0), dict(b=3, n_meas=0)])
def test_runconfig_rejects(kw):
    with pytest.raises(ValueError):
        RunConfig(**kw)


def test_runconfig_defaults():
    r = RunConfig(b=5)
    assert r.t_eq == 32 and r.meas_sweeps == 32 and r.interval == 10


# -------------------------------------------------------------- metropolis


def test_beta_zero_accepts_everything(inter32):
    ens = ReplicaEnsemble(inter32, [1.0, 2.0], derive_seed(1))
    assert metropolis_sweep(ens, 0, beta=0.0) == 1.0
    ens.check_energies()


def test_downhill_always_accepted(inter31):
    # at huge beta only dE <= 0 moves pass, so the energy never rises
    ens = ReplicaEnsemble(inter31, [1e9], derive_seed(2))
    energies = []
    for _ in range(20):
        ens.sweep(0)
        energies.append(ens.slot_energy(0))
    assert all(b <= a for a, b in zip(energies, energies[1:]))
    ens.check_energies()


def test_single_spin_in_field():
    h, beta = 0.37, 1.3
    inter = field_system(h)
    run = RunConfig(b=4, n_meas=1_000_000, interval=1, max_doublings=0)
    res = run_disorder_sample(inter, TemperatureLadder.explicit([1 / beta]), run, derive_seed(11))
    mean_w, se = batch_means_error(res.blocks[0], 1)
    p_up = (1 + mean_w) / 2
    want = 1 / (1 + math.exp(-2 * beta * h))
    assert abs(p_up - want) < 3 * se / 2


def test_energies_exact_after_sweeps(inter32):
    ens = ReplicaEnsemble(inter32, TemperatureLadder(0.5, 3.0, 6).betas, derive_seed(4))
    for _ in range(50):
        for s in range(ens.n_slots):
            ens.sweep(s)
        ens.exchange()
    before = ens.energies.copy()
    ens.check_energies()
    assert np.array_equal(before, ens.energies)


def test_energy_drift_detected(inter32):
    ens = ReplicaEnsemble(inter32, [1.0], derive_seed(4))
    ens.energies[0] += 2.0
    with pytest.raises(RuntimeError, match="drifted"):
        ens.check_energies()


def test_table_and_exp_paths_agree(inter32):
    a = ReplicaEnsemble(inter32, [0.7], derive_seed(9))
    b = ReplicaEnsemble(inter32, [0.7], derive_seed(9))
    b.tables = np.zeros((1, 0))
    for _ in range(30):
        a.sweep(0)
        b.sweep(0)
    assert np.array_equal(a.spins, b.spins)


# --------------------------------------------------------------- exchange


def test_equal_temperatures_always_swap(inter32):
    ens = ReplicaEnsemble(inter32, [1.0, 1.0, 1.0, 1.0], derive_seed(5))
    for _ in range(20):
        for s in range(4):
            ens.sweep(s)
        ens.exchange()
    assert np.array_equal(ens.swap_att, ens.swap_acc)
    assert ens.swap_att.sum() > 0


def test_exchange_alternates_pairs(inter32):
    ens = ReplicaEnsemble(inter32, [1.0, 1.0, 1.0, 1.0], derive_seed(5))
    st0 = pt_exchange(ens)
    st1 = pt_exchange(ens)
    assert st0["attempted"].tolist() == [1, 0, 1]
    assert st1["attempted"].tolist() == [0, 1, 0]


def test_exchange_relabels_only(inter32):
    ens = ReplicaEnsemble(inter32, TemperatureLadder(0.5, 2.0, 5).betas, derive_seed(6))
    spins = ens.spins.copy()
    for _ in range(40):
        ens.exchange()
    assert np.array_equal(spins, ens.spins)
    assert sorted(ens.at_slot.tolist()) == list(range(5))


def test_two_temperature_swap_rate():
    betas = np.array([1.0, 0.6])
    e1, e2 = -10.0, -7.0  # colder replica holds the lower energy
    rng = stream_states(derive_seed(8), 2)
    att = np.zeros(1, np.int64)
    acc = np.zeros(1, np.int64)
    n = 100_000
    for _ in range(n):
        at = np.array([0, 1])
        _exchange(betas, np.array([e1, e2]), at, np.array([0, 1]), rng, 0, att, acc, att, acc, False)
    want = min(1.0, math.exp((betas[0] - betas[1]) * (e1 - e2)))
    rate = acc[0] / n
    assert abs(rate - want) < 3 * math.sqrt(want * (1 - want) / n)


@settings(max_examples=30)
@given(ops=st.lists(st.sampled_from(["sweep", "exchange"]), min_size=1, max_size=40), seed=st.integers(0, 1000))
def test_permutation_stays_bijection(inter32, ops, seed):
    ens = ReplicaEnsemble(inter32, TemperatureLadder(0.5, 2.0, 4).betas, derive_seed(seed))
    for op in ops:
        if op == "sweep":
            for s in range(4):
                ens.sweep(s)
        else:
            ens.exchange()
        assert sorted(ens.at_slot.tolist()) == [0, 1, 2, 3]
        assert np.array_equal(ens.slot_of[ens.at_slot], np.arange(4))


def test_equal_temperature_slots_indistinguishable(inter31):
    run = RunConfig(b=10, n_meas=2**16, interval=8, max_doublings=0)
    sim = SampleRun(inter31, TemperatureLadder.explicit([2.5]), run, derive_seed(0))
    # four equal temperatures: build the ensemble directly
    sim = SampleRun.__new__(SampleRun)
    lad = TemperatureLadder.explicit([2.5])
    SampleRun.__init__(sim, inter31, lad, run, derive_seed(13))
    sim.ens = ReplicaEnsemble(inter31, [0.4] * 4, derive_seed(13))
    sim.lb_cnt = np.zeros((4,) + sim.lb_cnt.shape[1:], np.int64)
    sim.lb_w = np.zeros((4,) + sim.lb_w.shape[1:])
    sim.lb_E = np.zeros((4,) + sim.lb_E.shape[1:])
    sim._reset_measurement()
    sim.step_until(sim.target)
    table = sim.hist[:, sim.hist.sum(axis=0) > 50]
    _, pval, _, _ = chi2_contingency(table)
    assert pval > 0.01


# ------------------------------------------------------------ sample runs


def test_run_deterministic(inter32):
    run = RunConfig(b=6, interval=2)
    lad = TemperatureLadder(0.8, 2.0, 4)
    a = run_disorder_sample(inter32, lad, run, derive_seed(1, 2))
    b = run_disorder_sample(inter32, lad, run, derive_seed(1, 2))
    assert np.array_equal(a.blocks, b.blocks) and np.array_equal(a.hist, b.hist)
    c = run_disorder_sample(inter32, lad, run, derive_seed(1, 3))
    assert not np.array_equal(a.blocks, c.blocks)


def test_checkpoint_resume_bit_exact(inter32):
    run = RunConfig(b=7, interval=3)
    lad = TemperatureLadder(0.8, 2.0, 5)
    full = SampleRun(inter32, lad, run, derive_seed(4))
    full.run_to_completion()
    part = SampleRun(inter32, lad, run, derive_seed(4))
    assert part.run_to_completion(halt_after=77) is False
    state = {k: np.array(v, copy=True) for k, v in part.state().items()}
    resumed = SampleRun(inter32, lad, run, derive_seed(4))
    resumed.restore(state)
    assert resumed.sweeps == 77
    resumed.run_to_completion()
    a, b = full.result(), resumed.result()
    assert np.array_equal(a.blocks, b.blocks) and np.array_equal(a.hist, b.hist)
    assert np.array_equal(full.ens.spins, resumed.ens.spins)
    assert np.array_equal(full.ens.rng, resumed.ens.rng)


def test_restore_rejects_inconsistent_state(inter32):
    sim = SampleRun(inter32, TemperatureLadder(0.8, 2.0, 3), RunConfig(b=4), derive_seed(4))
    st_ = sim.state()
    st_["energies"] = st_["energies"] + 2
    with pytest.raises(RuntimeError):
        SampleRun(inter32, TemperatureLadder(0.8, 2.0, 3), RunConfig(b=4), derive_seed(4)).restore(st_)


def test_checkpoint_callback_cadence(inter32):
    seen = []
    run = RunConfig(b=6, checkpoint_interval=16)
    SampleRun(inter32, TemperatureLadder(0.8, 2.0, 3), run, derive_seed(4)).run_to_completion(
        checkpoint=lambda s: seen.append(s.sweeps))
    assert seen == list(range(16, 129, 16))


def test_doubling_on_failed_equilibration(inter32, monkeypatch):
    run = RunConfig(b=4, interval=1, max_doublings=2)
    sim = SampleRun(inter32, TemperatureLadder(0.8, 2.0, 3), run, derive_seed(4))
    fail = EquilibrationStatus(np.arange(3), {}, {}, False, "forced")
    monkeypatch.setattr(sim, "_check_lowest", lambda: fail)
    with pytest.warns(RuntimeWarning, match="equilibration check failed"):
        sim.run_to_completion()
    assert sim.b == 6 and sim.sweeps == 2**6 + 2**6
    assert sim.result().moments[0].n == 2**6


def test_ordered_phase_low_temperature():
    g = build_lattice(LatticeSpec(6, 6))
    inter = lattice_interactions(g, clean_disorder(g), CouplingSet())
    res = run_disorder_sample(inter, TemperatureLadder(0.5, 0.9, 3), RunConfig(b=9, interval=4), derive_seed(3))
    assert res.moments[0].mean_w > 0.9


def test_beta_zero_sweep_flips_every_spin(inter32):
    ens = ReplicaEnsemble(inter32, [0.0], derive_seed(21))
    before = ens.slot_spins(0).copy()
    ens.sweep(0)
    assert np.array_equal(ens.slot_spins(0), -before)


@pytest.mark.filterwarnings("ignore:equilibration check failed")
def test_hot_slot_matches_exact(inter31):
    from tricolor.oracle import count_states

    beta = 0.2
    run = RunConfig(b=8, n_meas=2**18, interval=1, max_doublings=0)
    res = run_disorder_sample(inter31, TemperatureLadder.explicit([1 / beta]), run, derive_seed(21))
    exact = count_states(inter31).exact(beta)
    for col, want in ((1, exact.w), (4, exact.E)):
        mean, se = batch_means_error(res.blocks[0], col)
        assert abs(mean - want) < 4 * se


# ---------------------------------------------------------- equilibration


def test_logbins_partition():
    s = np.arange(1, 2**10 + 1)
    lb = LogBinnedSeries.from_series(s, np.ones(len(s)), np.zeros(len(s)))
    per_bin = lb.count.sum(axis=1)
    assert per_bin[:11].tolist() == [2**k for k in range(10)] + [1]
    assert lb.count[9].tolist() == [64] * 8


def test_stationary_series_passes():
    rng = np.random.default_rng(0)
    n = 2**14 - 1
    lb = LogBinnedSeries.from_series(np.arange(1, n + 1), rng.normal(0.5, 0.1, n), rng.normal(-3, 1, n))
    st_ = check_equilibration(lb)
    assert st_.passed, st_.message


def test_drifting_series_fails():
    rng = np.random.default_rng(0)
    n = 2**14 - 1
    s = np.arange(1, n + 1)
    lb = LogBinnedSeries.from_series(s, 0.5 + 1e-4 * s + rng.normal(0, 0.01, n), rng.normal(-3, 0.01, n))
    st_ = check_equilibration(lb)
    assert not st_.passed and st_.message.startswith("w")


def test_equilibration_disorder_average():
    rng = np.random.default_rng(1)
    n = 2**12 - 1
    group = [LogBinnedSeries.from_series(np.arange(1, n + 1), rng.normal(m, 0.05, n), rng.normal(0, 1, n))
             for m in rng.normal(0.5, 0.1, 10)]
    assert check_equilibration(group).passed


def test_too_few_bins():
    lb = LogBinnedSeries.from_series(np.arange(1, 50), np.ones(49), np.ones(49))
    with pytest.raises(EquilibrationError, match="logarithmic bins"):
        check_equilibration(lb)


def test_partial_trailing_bin_ignored():
    rng = np.random.default_rng(2)
    n = 2**12  # the last point opens bin 12 on its own
    w = rng.normal(0.5, 0.1, n)
    w[-1] = 5.0
    E = rng.normal(0, 1, n)
    st_ = check_equilibration(LogBinnedSeries.from_series(np.arange(1, n + 1), w, E))
    ref = check_equilibration(LogBinnedSeries.from_series(np.arange(1, n), w[:-1], E[:-1]))
    assert st_.bins[-1] == 11
    assert st_.passed == ref.passed and st_.message == ref.message
