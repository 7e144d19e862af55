import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from conftest import tag
from tcpair.errors import (
    DegenerateGeometry,
    InsufficientAnchors,
    InsufficientSamples,
    InvalidInput,
    NoRegisteredAps,
    NonMonotonicTime,
    NotSupplicated,
    OutOfRange,
)
from tcpair.ledger import AccessDecision, Verdict
from tcpair.spectrum import (
    AirInterface,
    Measurement,
    Owner,
    PathLossParams,
    PeeringStatus,
    TargetPolicy,
    Vlan,
    VlanTable,
    assign_vlan,
    deduce_floor,
    distance,
    estimate_kinematics,
    gaussian_noise,
    invert_rssi,
    localize,
    rssi_at,
    sense,
    supplicate,
)

PL = PathLossParams()


def rsu(name, pos, **kw):
    return AirInterface(name, Owner.RoadsideUnit, pos, **kw)


def test_path_loss_hand_values():
    # 20 dBm - 40 dB - 10*3*log10(d)
    assert rssi_at(20, PL, 10) == pytest.approx(-50.0)
    assert rssi_at(20, PL, 100) == pytest.approx(-80.0)
    assert rssi_at(20, PL, 0.5) == pytest.approx(-20.0)  # clamped to the reference distance
    assert rssi_at(20, PL, 1e12) == -120.0
    assert rssi_at(100, PL, 1) == 30.0


@given(st.floats(1.0, 5000.0), st.floats(-10, 30))
def test_invert_rssi_inverts_unclamped_values(d, tx):
    r = rssi_at(tx, PL, d)
    assume(-120 < r < 30)
    assert invert_rssi(r, tx, PL) == pytest.approx(d, rel=1e-9)


@given(st.floats(1.0, 1000.0), st.floats(1.0, 1000.0))
def test_rssi_monotone_in_distance(a, b):
    near, far = sorted((a, b))
    assert rssi_at(20, PL, near) >= rssi_at(20, PL, far)


def test_path_loss_validation():
    for kw in ({"d0_m": 0}, {"exponent_n": 1.0}, {"exponent_n": 7.0}, {"noise_sigma_db": -1}):
        with pytest.raises(InvalidInput):
            PathLossParams(**kw)


def test_interface_validation():
    with pytest.raises(InvalidInput):
        AirInterface("ap", Owner.AccessPoint, (0, 0))
    with pytest.raises(InvalidInput):
        AirInterface("r", Owner.RoadsideUnit, (0, 0), floor=2)
    with pytest.raises(InvalidInput):
        AirInterface("r", Owner.RoadsideUnit, (0,))
    with pytest.raises(InvalidInput):
        Measurement("a", "b", -121.0, 1, 0)


def test_distance_mixes_2d_and_3d():
    assert distance((0, 0), (3, 4)) == 5.0
    assert distance((0, 0), (0, 0, 2)) == 2.0


def test_sense_respects_sensitivity_and_skips_self():
    me = rsu("me", (0, 0))
    env = [me, rsu("near", (10, 0)), rsu("far", (2000, 0))]
    got = sense(me, env, PL, timestamp_ms=7)
    assert [m.subject_id for m in got] == ["near"]
    assert got[0].rssi_dbm == pytest.approx(-50.0) and got[0].timestamp_ms == 7
    # strict inequality against the floor
    edge = sense(me, [rsu("x", (10, 0))], PL, sensitivity_dbm=rssi_at(20, PL, 10))
    assert edge == []


def test_noise_is_seeded():
    a = gaussian_noise(np.random.default_rng(5), 2.0)
    b = gaussian_noise(np.random.default_rng(5), 2.0)
    assert [a() for _ in range(5)] == [b() for _ in range(5)]
    assert gaussian_noise(np.random.default_rng(5), 0.0)() == 0.0


def test_supplicate():
    client, target = rsu("c", (0, 0)), rsu("t", (50, 0))
    assert supplicate(client, target, TargetPolicy.OpenSsid, PL).status is PeeringStatus.Registered
    assert supplicate(client, target, TargetPolicy.Closed, PL).status is PeeringStatus.Rejected
    with pytest.raises(OutOfRange):
        supplicate(client, rsu("t", (5000, 0)), TargetPolicy.OpenSsid, PL)
    with pytest.raises(InvalidInput):
        supplicate(client, client, TargetPolicy.OpenSsid, PL)


def test_localize_exact():
    anchors = [((0, 0), 5.0), ((10, 0), math.dist((10, 0), (3, 4))), ((0, 10), math.dist((0, 10), (3, 4)))]
    x, y = localize(anchors)
    assert math.hypot(x - 3, y - 4) < 1e-6


coord = st.floats(-500, 500)


@given(st.lists(st.tuples(coord, coord), min_size=3, max_size=6, unique=True), coord, coord)
def test_localize_recovers_target_from_exact_ranges(anchors, tx, ty):
    pts = np.array(anchors)
    centred = pts - pts.mean(axis=0)
    # keep well-conditioned layouts only
    sv = np.linalg.svd(centred, compute_uv=False)
    assume(sv[-1] > 5.0)
    x, y = localize([(p, math.dist(p, (tx, ty))) for p in anchors])
    assert math.hypot(x - tx, y - ty) < 1e-4


def test_localize_errors():
    with pytest.raises(InsufficientAnchors):
        localize([((0, 0), 1.0), ((1, 0), 1.0)])
    with pytest.raises(DegenerateGeometry):
        localize([((0, 0), 1.0), ((1, 0), 1.0), ((2, 0), 1.0)])
    with pytest.raises(DegenerateGeometry):
        localize([((1, 1), 1.0)] * 3)


def test_kinematics():
    speed, heading = estimate_kinematics([((0, 0), 0), ((10, 0), 1000), ((10, 10), 2000)])
    assert speed == pytest.approx(10.0) and heading == pytest.approx(90.0)
    assert estimate_kinematics([((0, 0), 0), ((-1, -1), 1000)])[1] == pytest.approx(225.0)
    with pytest.raises(InsufficientSamples):
        estimate_kinematics([((0, 0), 0)])
    with pytest.raises(NonMonotonicTime):
        estimate_kinematics([((0, 0), 5), ((1, 0), 5)])


def test_vlan_gating():
    table = VlanTable("a1")
    host = tag(3)
    grant, deny = AccessDecision(Verdict.Grant, (), 0), AccessDecision(Verdict.Deny, ("OuiAllowed",), 0)
    with pytest.raises(NotSupplicated):
        assign_vlan(table, host, grant, 0)
    assert table.admit(host, 0).vlan is Vlan.NullRoute
    assert assign_vlan(table, host, deny, 1).vlan is Vlan.NullRoute
    assert assign_vlan(table, host, grant, 2).vlan is Vlan.Routed
    table.release(host)
    assert table.vlan_of(host) is None and host not in table


def m(ap, rssi):
    return Measurement("dev", ap, rssi, 1, 0)


def test_floor_majority_of_top_k():
    reg = {"a": 1, "b": 2, "c": 2, "d": 3}
    assert deduce_floor([m("a", -40), m("b", -45), m("c", -50), m("d", -60)], reg) == 2
    assert deduce_floor([m("a", -40), m("b", -45), m("c", -50)], reg, k=1) == 1


def test_floor_ties_go_to_strongest():
    reg = {"a": 1, "b": 2, "c": 3}
    assert deduce_floor([m("b", -40), m("a", -45), m("c", -50)], reg) == 2
    # equal RSSI ordered by id
    assert deduce_floor([m("b", -40), m("a", -40)], reg, k=2) == 1


def test_floor_requires_registered_aps():
    with pytest.raises(NoRegisteredAps):
        deduce_floor([m("zz", -40)], {"a": 1})
