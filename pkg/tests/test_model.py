import json
import math
from dataclasses import replace

import numpy as np
import pytest

from hydroident.errors import ParseError
from hydroident.model import (
    ActuatorSpec,
    FluidEnv,
    HydroCoeffs,
    JointSpec,
    LinkSpec,
    MechanismModel,
    ParamVector,
    effective_length,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
    validate_model,
)
from hydroident.presets import ellipsoid_link, passive_pose_one


def three_link():
    return passive_pose_one()


def test_three_link_geometry_is_valid():
    assert validate_model(three_link()) == []


def test_effective_length_is_80mm():
    assert effective_length(three_link()) == pytest.approx(0.080, abs=1e-12)


def test_zero_mass_names_the_link():
    m = three_link()
    links = list(m.links)
    links[2] = replace(links[2], mass=0.0)
    violations = validate_model(replace(m, links=tuple(links)))
    assert len(violations) == 1
    assert violations[0].path == "links[2].mass"


def test_overlapping_schedule_is_one_violation():
    act = ActuatorSpec(joint_index=0, kind="velocity_servo", kv=1.0,
                       force_range=(-2.0, 2.0),
                       schedule=((0.0, 2.0, 1.0), (1.0, 3.0, -1.0)))
    m = replace(three_link(), actuators=(act,))
    violations = validate_model(m)
    assert len(violations) == 1
    assert "schedule" in violations[0].path


def test_validate_is_idempotent():
    m = replace(three_link(), base_pose=(float("nan"), 0.0, 0.0))
    assert validate_model(m) == validate_model(m)


def test_duplicate_actuator_joint_rejected():
    act = ActuatorSpec(joint_index=1, kind="none", kv=0.0,
                       force_range=(0.0, 0.0), schedule=())
    m = replace(three_link(), actuators=(act, act))
    violations = validate_model(m)
    assert any("actuated twice" in v.message for v in violations)


def test_force_range_must_straddle_zero():
    act = ActuatorSpec(joint_index=0, kind="velocity_servo", kv=1.0,
                       force_range=(0.5, 2.0), schedule=())
    violations = validate_model(replace(three_link(), actuators=(act,)))
    assert any(v.path == "actuators[0].force_range" for v in violations)


def test_model_json_round_trip(tmp_path):
    m = three_link()
    path = tmp_path / "m.json"
    save_model(m, path)
    assert load_model(path) == m


def test_round_trip_preserves_actuators(tmp_path):
    from hydroident.presets import active_straight
    m = active_straight()
    path = tmp_path / "m.json"
    save_model(m, path)
    assert load_model(path) == m


def test_malformed_json_raises_parse_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_model(path)


def test_missing_key_raises_parse_error():
    doc = model_to_dict(three_link())
    del doc["links"]
    with pytest.raises(ParseError):
        model_from_dict(doc)


def test_wrong_schema_version_rejected():
    doc = model_to_dict(three_link())
    doc["schema_version"] = 99
    with pytest.raises(ParseError):
        model_from_dict(doc)


def test_fluid_env_accepts_vacuum():
    m = replace(three_link(), fluid=FluidEnv(density=0.0, viscosity=0.0))
    assert validate_model(m) == []


def test_param_vector_basics():
    pv = ParamVector.uniform(3)
    assert pv.n_links == 3
    assert pv.coeff_matrix().shape == (3, 5)
    assert pv.link_coeffs(1) == HydroCoeffs(*pv.coeff_matrix()[1])


def test_param_vector_rejects_bad_length():
    with pytest.raises(Exception):
        ParamVector(np.zeros(7), np.zeros(7), np.ones(7))


def test_param_vector_rejects_out_of_bounds():
    with pytest.raises(Exception):
        ParamVector(np.full(5, 11.0), np.zeros(5), np.full(5, 10.0))


def test_valid_models_simulate_without_precondition_failures():
    # any model that passes validation must be accepted by the simulator
    from hydroident.dynamics import run_simulation
    from hydroident.errors import NumericalError
    rng = np.random.default_rng(42)
    for trial in range(10):
        n = int(rng.integers(1, 5))
        links = tuple(
            ellipsoid_link(length=float(rng.uniform(0.01, 0.06)),
                           width=float(rng.uniform(0.002, 0.01)),
                           overlap=0.0)
            for _ in range(n))
        joints = tuple(JointSpec(damping=float(rng.uniform(0, 1e-3)),
                                 friction_loss=float(rng.uniform(0, 1e-4)))
                       for _ in range(n))
        m = MechanismModel(
            base_pose=(0.0, 0.0, float(rng.uniform(-math.pi, math.pi))),
            links=links, joints=joints, actuators=(), fluid=FluidEnv(),
            initial_state=(tuple(rng.uniform(-1, 1, n)),
                           tuple(rng.uniform(-2, 2, n))))
        assert validate_model(m) == []
        coeffs = ParamVector(rng.uniform(0, 10, 5 * n),
                             np.zeros(5 * n), np.full(5 * n, 10.0))
        try:
            run_simulation(m, coeffs, 0.05, 1e-3, np.array([0.0, 0.05]))
        except NumericalError:
            pass  # numerical outcomes are allowed, precondition errors are not
