import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from molfield.core import (
    M2_TO_UM2,
    ConfigError,
    Deployment,
    DetectorMode,
    DetectorSpec,
    EmissionProtocol,
    Medium,
    ReceiverKind,
    ReceiverSpec,
    load_config,
    validate,
)


def raw(**over):
    cfg = {
        "medium": {"D_m2_per_s": 80e-12, "k_d_per_s": 0.0},
        "receiver": {"kind": "absorbing", "r_r_um": 5.0},
        "deployment": {"lambda_per_um3": 1e-4, "R_max_um": 50.0},
        "protocol": {"N_tx": 10000, "T_b_s": 0.2, "T_ss_s": 0.01, "bits": [1, 0, 1, 0]},
        "detector": {"mode": "fixed", "N_th": 3},
        "seed": 11,
    }
    for path, value in over.items():
        sec, key = path.split("__")
        cfg[sec][key] = value
    return cfg


def test_si_diffusion_converted_to_um2():
    cfg = validate(raw())
    assert cfg.medium.D == pytest.approx(80.0, rel=1e-15)


def test_um_diffusion_taken_verbatim():
    r = raw()
    r["medium"] = {"D_um2_per_s": 120.0}
    assert validate(r).medium.D == 120.0


def test_no_degradation_is_valid():
    assert validate(raw()).medium.k_d == 0.0


def test_sampling_interval_longer_than_bit_rejected():
    with pytest.raises(ConfigError, match="sampling interval exceeds bit interval") as exc:
        validate(raw(protocol__T_ss_s=0.3))
    assert exc.value.field == "protocol.T_ss"


@pytest.mark.parametrize(
    "path, value, field",
    [
        ("receiver__r_r_um", 0.0, "receiver.r_r"),
        ("receiver__r_r_um", -1.0, "receiver.r_r"),
        ("deployment__lambda_per_um3", 0.0, "deployment.lambda_a"),
        ("medium__k_d_per_s", -0.1, "medium.k_d"),
        ("protocol__N_tx", 0, "protocol.N_tx"),
        ("deployment__R_max_um", 4.0, "deployment.R_max_um"),
        ("receiver__kind", "reflecting", "receiver.kind"),
        ("detector__N_th", 0, "detector.N_th"),
    ],
)
def test_invalid_fields_are_named(path, value, field):
    with pytest.raises(ConfigError) as exc:
        validate(raw(**{path: value}))
    assert exc.value.field == field


def test_dfd_allows_non_positive_threshold():
    cfg = validate(raw(detector__mode="dfd", detector__N_th=-2))
    assert cfg.detector == DetectorSpec(DetectorMode.DFD, -2)


def test_missing_section_reported():
    r = raw()
    del r["medium"]
    with pytest.raises(ConfigError, match="medium"):
        validate(r)


def test_validate_is_idempotent():
    once = validate(raw())
    assert validate(once) == once
    assert validate(once.to_dict()) == once


@given(
    st.floats(1e-13, 1e-7),
    st.floats(0.0, 10.0),
    st.floats(0.1, 20.0),
    st.floats(1e-7, 1e-2),
    st.integers(1, 10**6),
)
def test_round_trip_property(D_si, k_d, r_r, lam, N_tx):
    r = raw()
    r["medium"] = {"D_m2_per_s": D_si, "k_d_per_s": k_d}
    r["receiver"]["r_r_um"] = r_r
    r["deployment"] = {"lambda_per_um3": lam, "R_max_um": r_r * 10}
    r["protocol"]["N_tx"] = N_tx
    cfg = validate(r)
    assert validate(cfg.to_dict()) == cfg
    assert validate(json.loads(json.dumps(cfg.to_dict()))) == cfg


@given(st.integers(-20, -6), st.integers(1, 9))
def test_power_of_ten_conversion_within_one_ulp(exp, mant):
    si = mant * 10.0**exp
    r = raw()
    r["medium"] = {"D_m2_per_s": si}
    D = validate(r).medium.D
    exact = mant * 10.0 ** (exp + 12)
    assert abs(D - exact) <= math.ulp(exact) * 1.0 + math.ulp(si) * M2_TO_UM2


def test_half_life_round_trip():
    m = Medium.from_half_life(80.0, 2.0)
    assert m.k_d == pytest.approx(math.log(2) / 2.0)
    assert m.half_life == pytest.approx(2.0)
    assert Medium(80.0).half_life == math.inf


def test_receiver_volume():
    assert ReceiverSpec(ReceiverKind.PASSIVE, 5.0).volume == pytest.approx(4 * math.pi * 125 / 3)


def test_protocol_defaults_and_bits():
    p = EmissionProtocol(20, 0.2, bits=[1, 0, 1, 0])
    assert p.T_ss == 0.2 and p.P0 == 0.5
    drawn = p.draw_bits(6, np.random.default_rng(0))
    assert list(drawn[:4]) == [1, 0, 1, 0] and set(drawn[4:]) <= {0, 1}
    with pytest.raises(ConfigError):
        EmissionProtocol(20, 0.2, bits=[2])


def test_deployment_mean_count():
    assert Deployment(1e-4, 50.0).mean_count(5.0) == pytest.approx(52.3075176822700599, rel=1e-14)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(bad)
    good = tmp_path / "good.json"
    good.write_text(json.dumps(raw()))
    assert load_config(good).seed == 11
