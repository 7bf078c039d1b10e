import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from secrelay import (Allocation, ChannelError, DeterministicSubchannel, GaussianSubchannel,
                      LinkGains, ModeAssignment, cap, deaf_bound_value, deaf_condition_holds,
                      deterministic_across, deterministic_separate, df_terms,
                      interference_upper_value, lower_bound_value, make_channel, nf_terms,
                      upper_bound_value)
from secrelay.rates import deaf_condition_margin


def C(x):
    return 0.5 * math.log2(1.0 + x)


def pos(x):
    return max(x, 0.0)


# scalar reference written directly from the rate expressions

def ref_lower(subs, modes, p1, p2, alpha):
    dfa = dfb = nfa = nfb = 0.0
    for s, m, a, b, al in zip(subs, modes, p1, p2, alpha):
        if m == "DF":
            cross = 2 * math.sqrt((1 - al) * a * b)
            dest = (a + s.rho1 * b + cross * math.sqrt(s.rho1)) / s.sigma2_dest
            eve = (a + s.rho2 * b + cross * math.sqrt(s.rho2)) / s.sigma2_eve
            dfa += pos(C(dest) - C(eve))
            dfb += pos(C(al * a / s.sigma2_relay) - C(eve))
        else:
            eve = C((a + s.rho2 * b) / s.sigma2_eve)
            nfa += pos(C((a + s.rho1 * b) / s.sigma2_dest) - eve)
            nfb += pos(C(a / s.sigma2_dest) + C(s.rho2 * b / s.sigma2_eve) - eve)
    total = 0.0
    if "DF" in modes:
        total += min(dfa, dfb)
    if "NF" in modes:
        total += min(nfa, nfb)
    return total


def ref_upper(subs, p1, p2, psi):
    out = 0.0
    for s, a, b, q in zip(subs, p1, p2, psi):
        dest = (a + s.rho1 * b + 2 * q * math.sqrt(s.rho1 * a * b)) / s.sigma2_dest
        eve = (a + s.rho2 * b + 2 * q * math.sqrt(s.rho2 * a * b)) / s.sigma2_eve
        out += C(dest) - C(eve)
    return out


def ref_deaf(subs, p1, p2):
    return sum(C(a / s.sigma2_dest) - C(a / (s.sigma2_eve + s.rho2 * b))
               for s, a, b in zip(subs, p1, p2))


pos_f = st.floats(0.25, 4.0)
rho_f = st.floats(0.0, 4.0)
sub_st = st.builds(GaussianSubchannel, pos_f, pos_f, pos_f, rho_f, rho_f)


@st.composite
def instances(draw, max_l=4):
    n = draw(st.integers(1, max_l))
    subs = draw(st.lists(sub_st, min_size=n, max_size=n))
    p = st.floats(0.0, 8.0)
    p1 = draw(st.lists(p, min_size=n, max_size=n))
    p2 = draw(st.lists(p, min_size=n, max_size=n))
    alpha = draw(st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n))
    psi = draw(st.lists(st.floats(-1.0, 1.0), min_size=n, max_size=n))
    modes = draw(st.lists(st.sampled_from(["DF", "NF"]), min_size=n, max_size=n))
    return subs, p1, p2, alpha, psi, modes


@pytest.mark.parametrize("x,expected", [(0, 0.0), (1, 0.5), (3, 1.0)])
def test_cap_values(x, expected):
    assert cap(x) == expected


def test_cap_vectorizes_and_rejects_bad_input():
    assert np.allclose(cap(np.array([0.0, 1.0, 3.0])), [0, 0.5, 1])
    for bad in (-1e-3, float("nan"), float("inf")):
        with pytest.raises(ValueError):
            cap(bad)


def test_df_terms_examples():
    sym = GaussianSubchannel(1, 1, 1, 1, 1)
    assert df_terms(sym, 1, 1, 1).term_dest == 0.0
    t = df_terms(GaussianSubchannel(1, 1, 3, 0, 0), 3, 0, 1)
    assert t.term_dest == pytest.approx(0.5, abs=1e-12)
    assert t.term_relay_or_alt == pytest.approx(0.5, abs=1e-12)
    t = df_terms(GaussianSubchannel(1, 1, 1, 4, 0), 1, 1, 0)
    assert t.term_dest == pytest.approx(C(9) - 0.5, abs=1e-12)
    assert t.term_dest == pytest.approx(1.160964, abs=1e-6)
    assert t.term_relay_or_alt == 0.0  # nothing fresh left for the relay to decode


def test_df_terms_reject_alpha_out_of_range():
    with pytest.raises(ChannelError):
        df_terms(GaussianSubchannel(1, 1, 1, 1, 1), 1, 1, 1.5)


def test_nf_terms_examples():
    t = nf_terms(GaussianSubchannel(1, 1, 3, 1, 1), 1, 0)
    assert t.term_dest == pytest.approx(0.29248, abs=1e-5)
    assert t.term_relay_or_alt == pytest.approx(t.term_dest, abs=1e-15)
    assert nf_terms(GaussianSubchannel(1, 2, 2, 3, 3), 1, 1).term_dest == 0.0
    t = nf_terms(GaussianSubchannel(1, 1, 1, 1, 1), 0, 1)
    assert t.term_dest == 0.0 and t.term_relay_or_alt == 0.0


def test_lower_bound_relay_silent_is_parallel_wiretap():
    ch = make_channel(1.0, [1.0, 2.0, 0.5], [3.0, 1.0, 2.0], 2.0, 1.0)
    p1 = np.array([1.0, 2.0, 0.5])
    alloc = Allocation(p1, np.zeros(3))
    expected = sum(pos(C(a / s.sigma2_dest) - C(a / s.sigma2_eve)) for s, a in zip(ch, p1))
    got = lower_bound_value(ch, ModeAssignment.all("NF", 3), alloc)
    assert got == pytest.approx(expected, abs=1e-12)


def test_lower_bound_mixed_modes_example():
    ch = make_channel(1.0, 1.0, 1.0, [4.0, 4.0], [0.25, 0.25])
    modes = ModeAssignment(("DF", "NF"))
    alloc = Allocation([1, 1], [1, 1], [1, 1])
    got = lower_bound_value(ch, modes, alloc)
    assert got == pytest.approx(ref_lower(list(ch), ["DF", "NF"], [1, 1], [1, 1], [1, 1]),
                                abs=1e-12)
    assert got > 0


def test_upper_bound_examples():
    ch = make_channel(1.0, 1.0, 1.0, 4.0, 0.0)
    assert upper_bound_value(ch, Allocation([1], [1], psi=[0])) == pytest.approx(
        C(5) - 0.5, abs=1e-12)
    assert upper_bound_value(ch, Allocation([1], [1], psi=[0])) == pytest.approx(0.79248, abs=1e-5)
    sym = make_channel(1.0, 1.0, 1.0, 1.0, 1.0)
    assert upper_bound_value(sym, Allocation([1], [1], psi=[1])) == 0.0
    assert upper_bound_value(sym, Allocation([1], [1], psi=[0])) == 0.0


def test_upper_bound_can_be_negative():
    ch = make_channel(1.0, 2.0, 1.0, 0.0, 0.0)
    assert upper_bound_value(ch, Allocation([1], [0])) < 0


def test_interference_reduces_to_plain_bound_for_one_subchannel():
    ch = make_channel(1.0, 0.5, 2.0, 3.0, 0.7)
    a = Allocation([1.3], [0.4], psi=[-0.3])
    assert interference_upper_value(ch, a) == upper_bound_value(ch, a)


def test_interference_example_and_conventions():
    ch = make_channel(1.0, 1.0, 1.0, [1.0, 1.0], [1.0, 1.0])
    a = Allocation([1, 1], [0, 0])
    assert interference_upper_value(ch, a) == pytest.approx(2 * (0.5 - C(0.5)), abs=1e-12)
    assert interference_upper_value(ch, a) == pytest.approx(0.41504, abs=1e-5)
    ch2 = make_channel(1.0, 1.0, 1.0, [1.0, 1.0], [4.0, 0.25])
    b = Allocation([1, 2], [1, 3])
    # psi = 0: each subchannel's eavesdropper noise grows by the other's
    # p1 + g(rho2) * p2, with g = sqrt as printed or identity
    for conv, g in (("as-printed", math.sqrt), ("power-consistent", lambda r: r)):
        n0 = 1.0 + 2.0 + g(0.25) * 3.0
        n1 = 1.0 + 1.0 + g(4.0) * 1.0
        exp = (C(2.0) - C(5.0 / n0)) + (C(5.0) - C(2.75 / n1))
        assert interference_upper_value(ch2, b, conv) == pytest.approx(exp, abs=1e-12)
    with pytest.raises(ValueError):
        interference_upper_value(ch2, b, "other")


@given(instances(max_l=3))
@settings(max_examples=60, deadline=None)
def test_interference_not_below_plain_bound(inst):
    subs, p1, p2, _, psi, _ = inst
    ch = make_channel(*(np.array([getattr(s, f) for s in subs]) for f in
                        ("sigma2_relay", "sigma2_dest", "sigma2_eve", "rho1", "rho2")))
    a = Allocation(p1, p2, psi=psi)
    for conv in ("as-printed", "power-consistent"):
        assert interference_upper_value(ch, a, conv) >= upper_bound_value(ch, a) - 1e-12


def test_deaf_bound_examples():
    ch = make_channel(1.0, 1.0, 1.0, 4.0, 1.0)
    v = deaf_bound_value(ch, Allocation([3], [3]))
    assert v == pytest.approx(1.0 - C(0.75), abs=1e-12)
    assert v == pytest.approx(0.59632, abs=1e-5)
    assert deaf_bound_value(make_channel(1, 1, 1, 1, 0.0), Allocation([2], [2])) == 0.0
    assert deaf_bound_value(ch, Allocation([0], [5])) == 0.0


def test_deaf_condition_examples():
    ch = make_channel(1.0, 1.0, 1.0, 4.0, 1.0)
    assert deaf_condition_holds(ch, Allocation([1], [0]))  # 0 >= 0
    assert deaf_condition_holds(ch, Allocation([1], [2]))
    assert deaf_condition_margin(ch, Allocation([1], [2])) == pytest.approx(C(4) - C(2))
    assert not deaf_condition_holds(make_channel(1, 1, 1, 0.0, 1.0), Allocation([1], [1]))


def test_deterministic_examples():
    fig = [DeterministicSubchannel(4, 3, 2), DeterministicSubchannel(5, 7, 3)]
    assert deterministic_across(fig) == 4
    assert deterministic_separate(fig) == 3
    one = [DeterministicSubchannel(4, 3, 2)]
    assert deterministic_across(one) == 1 == deterministic_separate(one)
    assert deterministic_separate([DeterministicSubchannel(2, 2, 2)]) == 0
    with pytest.raises(ValueError):
        deterministic_across([])


@given(instances())
@settings(max_examples=200, deadline=None)
def test_vectorized_rates_match_reference(inst):
    subs, p1, p2, alpha, psi, modes = inst
    ch = make_channel(*(np.array([getattr(s, f) for s in subs]) for f in
                        ("sigma2_relay", "sigma2_dest", "sigma2_eve", "rho1", "rho2")))
    a = Allocation(p1, p2, alpha, psi)
    assert lower_bound_value(ch, ModeAssignment(tuple(modes)), a) == pytest.approx(
        ref_lower(subs, modes, p1, p2, alpha), abs=1e-10)
    assert upper_bound_value(ch, a) == pytest.approx(ref_upper(subs, p1, p2, psi), abs=1e-10)
    assert deaf_bound_value(ch, a) == pytest.approx(ref_deaf(subs, p1, p2), abs=1e-10)


@given(instances())
@settings(max_examples=100, deadline=None)
def test_symmetric_channels_give_zero(inst):
    subs, p1, p2, alpha, psi, modes = inst
    s2 = np.array([s.sigma2_dest for s in subs])
    rho = np.array([s.rho1 for s in subs])
    ch = make_channel(1.0, s2, s2, rho, rho)
    a = Allocation(p1, p2, alpha, psi)
    assert lower_bound_value(ch, ModeAssignment(tuple(modes)), a) == 0.0
    assert upper_bound_value(ch, a) == 0.0


def test_rate_factor_scales_every_bound():
    ch = make_channel([1.0, 2.0], [0.5, 1.0], [2.0, 3.0], [3.0, 0.5], [0.5, 2.0])
    g = ch.gains()
    g2 = LinkGains(g.sd, g.rd, g.se, g.re, g.sr, g.noise_dest, g.noise_eve, g.noise_relay, 2.0)
    a = Allocation([1.0, 2.0], [0.5, 1.5], [0.3, 0.8], [0.2, -0.4])
    modes = ModeAssignment(("DF", "NF"))
    assert lower_bound_value(g2, modes, a) == pytest.approx(2 * lower_bound_value(ch, modes, a))
    assert upper_bound_value(g2, a) == pytest.approx(2 * upper_bound_value(ch, a))
    assert deaf_bound_value(g2, a) == pytest.approx(2 * deaf_bound_value(ch, a))


def test_length_mismatch_is_reported():
    ch = make_channel(1.0, 1.0, 1.0, [1.0, 1.0], 1.0)
    with pytest.raises(ChannelError):
        upper_bound_value(ch, Allocation([1.0], [1.0]))
    with pytest.raises(ChannelError):
        lower_bound_value(ch, ModeAssignment(("DF",)), Allocation([1, 1], [1, 1]))
