import math

import numpy as np
import pytest

from secrelay import (Allocation, ChannelError, Geometry, Mode, ModeAssignment, PowerBudget,
                      SolverOptions, lower_bound_value, upper_bound_value)
from secrelay.fading import (FadingBatch, FadingScenario, SweepRow, batch_to_channel,
                             batch_to_gains, ergodic_lower, ergodic_upper, format_sweep_csv,
                             no_relay, path_loss, sample_fading, select_modes_best,
                             select_modes_heuristic, state_values, sweep_relay_position)

FAST = SolverOptions(n_starts=3, max_iters=200)


def C(x):
    return 0.5 * math.log2(1.0 + x)


def batch_from(**powers):
    """Batch with real gains sqrt(power) per link; missing links get power 1."""
    n = len(next(iter(powers.values())))
    cols = [np.sqrt(np.asarray(powers.get(k, np.ones(n)), dtype=float))
            for k in ("sr", "sd", "rd", "se", "re")]
    return FadingBatch(np.column_stack(cols).astype(complex))


def test_path_loss_scaling():
    geo = Geometry(relay_pos=(0.5, 0.0))
    pl = dict(zip(("sr", "sd", "rd", "se", "re"), path_loss(geo)))
    assert pl["sd"] == 1.0 and pl["se"] == 1.0
    assert pl["sr"] == pytest.approx(2.0, abs=1e-15)
    assert pl["rd"] == pytest.approx(2.0, abs=1e-15)
    assert pl["re"] == pytest.approx(1 / math.sqrt(1.25), abs=1e-15)
    steep = path_loss(Geometry(relay_pos=(0.5, 0.0), gamma=4.0))
    assert steep[0] == pytest.approx(4.0)


def test_coincident_nodes_rejected():
    scen = FadingScenario(geometry=Geometry(relay_pos=(0.0, 0.0)))
    with pytest.raises(ChannelError) as err:
        sample_fading(scen)
    assert err.value.field == "sr"


def test_sampling_is_deterministic_and_shaped():
    scen = FadingScenario(n_states=16, seed=42)
    a, b = sample_fading(scen), sample_fading(scen)
    assert a.h.shape == (16, 5)
    assert np.array_equal(a.h, b.h)
    assert not np.array_equal(a.h, sample_fading(FadingScenario(n_states=16, seed=43)).h)
    assert len(a.draws) == 16 and a.draws[3].h_rd == a.h[3, 2]
    assert np.array_equal(FadingBatch.from_draws(a.draws).h, a.h)


def test_unit_variance_draws():
    scen = FadingScenario(n_states=20000, seed=1, geometry=Geometry(relay_pos=(1.0, 1.0)))
    # relay at (1,1) is unit distance from destination and eavesdropper
    h = sample_fading(scen)
    assert np.mean(h.power("sd")) == pytest.approx(1.0, abs=0.03)
    assert np.mean(h.power("rd")) == pytest.approx(1.0, abs=0.03)
    assert abs(np.mean(h.h[:, 1])) < 0.02


def test_moving_the_relay_reuses_random_numbers():
    near = sample_fading(FadingScenario(n_states=8, seed=3).with_relay_at(0.2))
    far = sample_fading(FadingScenario(n_states=8, seed=3).with_relay_at(1.5))
    assert np.array_equal(near.h[:, 1], far.h[:, 1])  # sd
    assert np.array_equal(near.h[:, 3], far.h[:, 3])  # se
    assert np.allclose(far.h[:, 0] / near.h[:, 0], (1.5 / 0.2) ** -1)


def test_batch_validation():
    with pytest.raises(ChannelError):
        FadingBatch(np.ones((3, 4)))
    with pytest.raises(ChannelError):
        FadingBatch(np.full((1, 5), np.nan))
    with pytest.raises(ChannelError):
        FadingScenario(n_states=0)
    with pytest.raises(ChannelError):
        FadingScenario(noise=(1.0, 0.0, 1.0))


def test_heuristic_rule():
    b = batch_from(sd=[1.0, 2.0, 1.5], sr=[2.0, 1.0, 1.5])
    assert select_modes_heuristic(b).modes == (Mode.DF, Mode.NF, Mode.NF)


def test_best_rule_examples():
    scen = FadingScenario(n_states=2, budget=PowerBudget(4.0, 4.0))
    quiet_eve = batch_from(sr=[50.0, 50.0], se=[0.0, 0.0], re=[0.0, 0.0])
    assert select_modes_best(quiet_eve, scen).modes == (Mode.DF, Mode.DF)
    deaf_relay = batch_from(sr=[1e-9, 1e-9], rd=[40.0, 40.0], re=[20.0, 20.0], se=[0.5, 0.5])
    assert select_modes_best(deaf_relay, scen).modes == (Mode.NF, Mode.NF)


def test_best_rule_dominates_heuristic_per_state():
    scen = FadingScenario(n_states=32, seed=7, budget=PowerBudget(4.0, 4.0))
    b = sample_fading(scen)
    best = select_modes_best(b, scen)
    assert best == select_modes_best(b, scen)
    heur = select_modes_heuristic(b)
    g = batch_to_gains(b, scen)
    uni = Allocation(np.full(32, 4.0), np.full(32, 4.0))
    df, nf = state_values(g, uni)
    pick = lambda m: np.where(m.df_mask, df, nf)
    assert np.all(pick(best) >= pick(heur))
    assert np.all(pick(best) == np.maximum(df, nf))


def test_normalized_channel_is_half_the_fading_rate():
    scen = FadingScenario(n_states=6, seed=9, noise=(0.5, 1.5, 2.0))
    b = sample_fading(scen.with_relay_at(0.7))
    g, ch = batch_to_gains(b, scen), batch_to_channel(b, scen)
    rng = np.random.default_rng(0)
    a = Allocation(rng.uniform(0, 5, 6), rng.uniform(0, 5, 6), rng.uniform(0, 1, 6),
                   rng.uniform(-1, 1, 6))
    modes = ModeAssignment(tuple(rng.choice(["DF", "NF"], 6)))
    assert lower_bound_value(g, modes, a) == pytest.approx(2 * lower_bound_value(ch, modes, a),
                                                           rel=1e-12, abs=1e-15)
    assert upper_bound_value(g, a) == pytest.approx(2 * upper_bound_value(ch, a), rel=1e-12)


def water_fill(gains, total):
    """max sum 2*C(g*p) over sum p <= total, by bisection on the water level."""
    lo, hi = 1e-12, 1e6
    for _ in range(300):
        mu = math.sqrt(lo * hi)
        p = np.maximum(mu - 1.0 / gains, 0.0)
        lo, hi = (mu, hi) if p.sum() < total else (lo, mu)
    p = np.maximum(mu - 1.0 / gains, 0.0)
    return float(np.sum(np.log2(1.0 + gains * p)))


def test_no_eavesdropper_gives_water_filled_main_channel():
    n = 5
    sd = np.array([0.3, 1.2, 2.0, 0.8, 0.1])
    b = batch_from(sd=sd, se=np.zeros(n), re=np.zeros(n), sr=np.full(n, 1e-6))
    scen = FadingScenario(n_states=n, budget=PowerBudget(2.0, 2.0))
    res = ergodic_lower(scen, ModeAssignment.all("NF", n), batch=b)
    assert res.value == pytest.approx(water_fill(sd, n * 2.0) / n, abs=1e-6)


def test_identical_links_give_zero():
    n = 4
    rng = np.random.default_rng(4)
    sd, rd = rng.uniform(0.2, 2, n), rng.uniform(0.2, 2, n)
    b = batch_from(sd=sd, rd=rd, se=sd, re=rd)
    scen = FadingScenario(n_states=n, budget=PowerBudget(3.0, 3.0))
    assert ergodic_lower(scen, ModeAssignment.all("NF", n), FAST, batch=b).value == 0.0
    assert ergodic_upper(scen, FAST, batch=b).value == 0.0


def test_relay_off_is_the_no_relay_baseline():
    scen = FadingScenario(n_states=8, seed=5, budget=PowerBudget(8.0, 8.0))
    b = sample_fading(scen)
    off = ergodic_lower(scen, ModeAssignment.all("NF", 8), FAST, relay_off=True, batch=b)
    assert off.value == no_relay(scen, FAST, b).value
    assert not np.any(off.allocation.p2)


def test_average_power_constraints_hold():
    scen = FadingScenario(n_states=8, seed=2, budget=PowerBudget(8.0, 5.0))
    b = sample_fading(scen)
    for res in (ergodic_lower(scen, select_modes_heuristic(b), FAST, batch=b),
                ergodic_upper(scen, FAST, batch=b)):
        assert res.allocation.p1.mean() <= 8.0 * (1 + 1e-9)
        assert res.allocation.p2.mean() <= 5.0 * (1 + 1e-9)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_upper_not_below_lower(seed):
    scen = FadingScenario(n_states=6, seed=seed, budget=PowerBudget(16.0, 16.0))
    b = sample_fading(scen)
    lo = ergodic_lower(scen, select_modes_best(b, scen), batch=b).value
    assert ergodic_upper(scen, batch=b).value >= lo - 1e-9


def test_some_states_get_no_source_power():
    scen = FadingScenario(n_states=16, seed=42, budget=PowerBudget(64.0, 64.0)).with_relay_at(0.5)
    b = sample_fading(scen)
    modes = select_modes_heuristic(b)
    res = ergodic_lower(scen, modes, batch=b)
    a = res.allocation
    idle = np.nonzero(a.p1 == 0)[0]
    assert 0 < idle.size < 16
    # The terms are coupled through min-of-sums, so an idle state may still
    # have secrecy potential of its own. Shifting source power into it must
    # not help, though.
    g = batch_to_gains(b, scen)
    base = lower_bound_value(g, modes, a)
    for s in idle:
        for donor in np.nonzero(a.p1 > 0)[0]:
            for eps in (0.5, 4.0):
                p1 = a.p1.copy()
                moved = min(eps, p1[donor])
                p1[donor] -= moved
                p1[s] += moved
                assert lower_bound_value(g, modes, Allocation(p1, a.p2, a.alpha)) <= base + 1e-9


def test_sweep_rows_order_and_csv():
    tmpl = FadingScenario(n_states=4, seed=1, budget=PowerBudget(4.0, 4.0))
    rows = sweep_relay_position(tmpl, [1.2, 0.4], ["no_relay", "NF_all", "hybrid_best"], FAST)
    assert [(r.d, r.scheme) for r in rows] == [
        (0.4, "no_relay"), (0.4, "NF_all"), (0.4, "hybrid_best"),
        (1.2, "no_relay"), (1.2, "NF_all"), (1.2, "hybrid_best")]
    assert rows[0].rate_bits == rows[3].rate_bits  # baseline ignores the relay
    by = {(r.d, r.scheme): r.rate_bits for r in rows}
    for d in (0.4, 1.2):
        assert by[(d, "NF_all")] >= by[(d, "no_relay")] - 1e-9
        assert by[(d, "hybrid_best")] >= by[(d, "NF_all")] - 1e-9
    text = format_sweep_csv(rows)
    assert text.startswith("d,scheme,rate_bits\n0.4,no_relay,")
    assert "\r" not in text and text.endswith("\n")
    assert len(text.splitlines()) == 7


def test_csv_number_format():
    text = format_sweep_csv([SweepRow(0.30000000000000004, "upper", 1.0 / 3.0)])
    assert text.splitlines()[1] == "0.3,upper,0.333333333"


def test_sweep_is_reproducible_with_threads(monkeypatch):
    tmpl = FadingScenario(n_states=3, seed=8, budget=PowerBudget(4.0, 4.0))
    args = (tmpl, [0.3, 0.9, 1.5], ["DF_all", "upper"], FAST)
    one = format_sweep_csv(sweep_relay_position(*args))
    monkeypatch.setenv("SECRELAY_THREADS", "3")
    assert format_sweep_csv(sweep_relay_position(*args)) == one


def test_sweep_rejects_bad_input(monkeypatch):
    tmpl = FadingScenario(n_states=2)
    with pytest.raises(ValueError):
        sweep_relay_position(tmpl, [], ["no_relay"])
    with pytest.raises(ValueError):
        sweep_relay_position(tmpl, [0.5], ["AF_all"])
    monkeypatch.setenv("SECRELAY_THREADS", "many")
    with pytest.raises(ChannelError):
        sweep_relay_position(tmpl, [0.5], ["no_relay"])


def test_batches_are_averaged():
    one = FadingScenario(n_states=3, seed=4, budget=PowerBudget(4.0, 4.0))
    two = FadingScenario(n_states=3, seed=4, budget=PowerBudget(4.0, 4.0), n_batches=2)
    r1 = sweep_relay_position(one, [0.5], ["no_relay"], FAST)[0].rate_bits
    r2 = sweep_relay_position(two, [0.5], ["no_relay"], FAST)[0].rate_bits
    other = no_relay(one, FAST, FadingBatch(
        sample_fading(one, batch=1).h)).value
    assert r2 == pytest.approx((r1 + other) / 2, abs=1e-12)
