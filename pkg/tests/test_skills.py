"""Skill layer tests: termination detection, end-signal labeling, waypoint
PD control, staged manipulation skills run against the kinematic world, and
the retrieval policy with temporal ensembling.

Oracle notes: termination indices are checked against a direct scalar loop;
PD convergence is checked by closed-loop rollout; manipulation outcomes are
checked through world-state effects (attachment, drop height, press latch).
"""

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locoman.attention import localize, synth_embedding_bank
from locoman.errors import ConfigError, CorruptFileError, RejectedInputError
from locoman.geometry import BaseCommand, GripperCommand, Pose, compose, inverse
from locoman.config import load_robot_config
from locoman.simworld import (
    WholeBodyCommand,
    WorldObject,
    WorldState,
    initial_robot_state,
    mount_pose,
    render_observation,
    step,
)
from locoman.skills import (
    ChunkedPolicy,
    GraspSkill,
    NavigationSkill,
    PDGains,
    SkillSpec,
    SkillStepOutput,
    TerminationConfig,
    compute_attention,
    detect_termination,
    label_end_signal,
    load_policy,
    load_skill_library,
    make_skill,
    navigate_waypoint,
    policy_features,
    policy_infer,
    save_policy,
    skill_step,
    temporal_ensemble,
)
from locoman.skills.imitation import decode_action, encode_action

CFG = load_robot_config()
BANK = synth_embedding_bank(["background", "cube", "table", "bin", "button"], 16, seed=11)


def termination_oracle(values, threshold, window):
    # scalar reference: first full window of strictly-above values
    for t in range(len(values)):
        if t + 1 < window:
            continue
        if all(v > threshold for v in values[t - window + 1 : t + 1]):
            return t
    return None


# ---------------------------------------------------------------------------
# termination detection and labeling


def test_termination_ten_confident_frames_fire_at_index_nine():
    values = [0.9] * 10
    assert detect_termination(values, TerminationConfig()) == 9


def test_termination_never_fires_below_threshold():
    assert detect_termination([0.5] * 50, TerminationConfig()) is None
    assert detect_termination([], TerminationConfig()) is None


def test_termination_interrupted_run_restarts_the_window():
    values = [0.9] * 9 + [0.5] + [0.9] * 10
    assert detect_termination(values, TerminationConfig()) == 19


def test_termination_threshold_is_strict():
    # values exactly at the threshold do not count
    assert detect_termination([0.8] * 20, TerminationConfig(threshold=0.8)) is None


@given(
    st.lists(st.floats(min_value=0.0, max_value=1.0, allow_nan=False), max_size=60),
    st.integers(min_value=1, max_value=8),
)
@settings(max_examples=120, deadline=None)
def test_termination_matches_scalar_oracle(values, window):
    cfg = TerminationConfig(threshold=0.7, window=window)
    assert detect_termination(values, cfg) == termination_oracle(values, 0.7, window)


@given(
    st.lists(st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=1, max_size=40),
    st.lists(st.floats(min_value=0.0, max_value=1.0, allow_nan=False), max_size=20),
)
@settings(max_examples=80, deadline=None)
def test_termination_is_stable_under_extension(prefix, suffix):
    cfg = TerminationConfig(threshold=0.7, window=4)
    first = detect_termination(prefix, cfg)
    if first is not None:
        assert detect_termination(list(prefix) + list(suffix), cfg) == first


def test_termination_config_validation():
    with pytest.raises(RejectedInputError):
        TerminationConfig(threshold=1.5)
    with pytest.raises(RejectedInputError):
        TerminationConfig(window=0)
    with pytest.raises(RejectedInputError):
        TerminationConfig(label_tail=0)


def test_label_end_signal_marks_the_final_frames():
    labels = label_end_signal(100, TerminationConfig())
    assert labels.shape == (100,)
    assert np.all(labels[:90] == 0.0)
    assert np.all(labels[90:] == 1.0)


def test_label_end_signal_short_episodes():
    assert np.all(label_end_signal(5, TerminationConfig()) == 1.0)
    labels = label_end_signal(11, TerminationConfig())
    assert labels[0] == 0.0 and np.all(labels[1:] == 1.0)
    with pytest.raises(RejectedInputError):
        label_end_signal(-1, TerminationConfig())


@given(
    st.integers(min_value=1, max_value=80),
    st.integers(min_value=1, max_value=12),
    st.integers(min_value=1, max_value=12),
)
@settings(max_examples=150, deadline=None)
def test_labels_trigger_the_detector_at_the_predicted_step(length, window, tail):
    # Feeding perfect labels into the detector must fire exactly when the
    # first `window` labeled frames have been seen, and never earlier.
    cfg = TerminationConfig(window=window, label_tail=tail)
    labels = label_end_signal(length, cfg)
    fired = detect_termination(labels.tolist(), cfg)
    ones = length - max(0, length - tail)
    if window <= ones:
        assert fired == max(0, length - tail) + window - 1
    else:
        assert fired is None


def test_labels_and_detector_agree_at_defaults():
    cfg = TerminationConfig()
    labels = label_end_signal(64, cfg)
    assert detect_termination(labels.tolist(), cfg) == 63


# ---------------------------------------------------------------------------
# waypoint navigation


def test_nav_already_at_target_is_done_and_still():
    result = navigate_waypoint((1.0, 2.0, 0.5), (1.0, 2.0, 0.5), PDGains())
    assert result.done
    assert np.allclose(result.command.linear_velocity, 0.0)
    assert result.command.angular_velocity == 0.0


def test_nav_target_straight_ahead_drives_forward_without_turning():
    result = navigate_waypoint((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), PDGains())
    assert not result.done
    assert result.command.linear_velocity[0] > 0.1
    assert result.command.angular_velocity == 0.0


def test_nav_turns_toward_a_lateral_target():
    result = navigate_waypoint((0.0, 0.0, 0.0), (0.0, 1.0, 0.0), PDGains())
    assert result.command.angular_velocity > 0.0
    # barely any forward drive while pointing the wrong way
    assert result.command.linear_velocity[0] < 0.05


def test_nav_command_respects_gain_limits():
    gains = PDGains(max_linear=0.6, max_angular=1.2)
    result = navigate_waypoint((0.0, 0.0, 0.0), (50.0, 0.0, 0.0), gains)
    assert np.linalg.norm(result.command.linear_velocity) <= 0.6 + 1e-12
    result = navigate_waypoint((0.0, 0.0, 0.0), (0.0, -0.2, 0.0), gains)
    assert abs(result.command.angular_velocity) <= 1.2 + 1e-12


def _roll_nav(start, target, max_steps, dt=0.02):
    x, y, yaw = start
    memory = None
    for i in range(max_steps):
        res = navigate_waypoint((x, y, yaw), target, PDGains(), memory=memory, dt=dt)
        if res.done:
            return i, (x, y, yaw)
        memory = res.memory
        vx, vy = res.command.linear_velocity
        c, s = math.cos(yaw), math.sin(yaw)
        x += (c * vx - s * vy) * dt
        y += (s * vx + c * vy) * dt
        yaw += res.command.angular_velocity * dt
    return None, (x, y, yaw)


def test_nav_converges_from_two_meters_within_six_hundred_steps():
    steps, pose = _roll_nav((0.0, 0.0, 0.0), (2.0, 0.0, 0.0), 600)
    assert steps is not None
    assert math.hypot(pose[0] - 2.0, pose[1]) < 0.05


def test_nav_converges_from_five_meters_with_turn_in_place():
    steps, pose = _roll_nav((-3.0, 4.0, 2.5), (0.0, 0.0, -1.0), 3000)
    assert steps is not None
    assert abs((pose[2] - (-1.0) + math.pi) % (2 * math.pi) - math.pi) < 0.1


def test_navigation_skill_runs_on_the_simulator():
    robot = initial_robot_state(CFG)
    world = WorldState(robot=robot, objects=(), waypoints={"dock": Pose.from_yaw(0.0, [2.0, 0.5, 0.0])})
    spec = SkillSpec(name="navigate", kind="analytical", parameters={"behavior": "navigate", "waypoint": "dock"})
    skill = make_skill(spec, waypoints=world.waypoints)
    done_at = None
    for i in range(900):
        obs = render_observation(world, BANK, cameras=())
        out = skill_step(skill, obs, {})
        assert 0.0 <= out.end_signal <= 1.0
        world = step(world, out.command, 0.02)
        if out.end_signal >= 1.0:
            done_at = i
            break
    assert done_at is not None
    assert math.hypot(world.robot.base_xy[0] - 2.0, world.robot.base_xy[1] - 0.5) < 0.05
    assert abs(world.robot.base_yaw) < 0.1


# ---------------------------------------------------------------------------
# staged manipulation skills


def _grasp_world():
    robot = initial_robot_state(CFG)
    table = WorldObject(
        id="table1", category="table", pose=Pose.from_yaw(0.0, [0.55, 0.0, 0.0]),
        is_receptacle=True, footprint_radius=0.25, top_height=0.30,
    )
    cube = WorldObject(
        id="cube1", category="cube", pose=Pose.from_yaw(0.0, [0.55, 0.03, 0.32]),
        graspable=True, half_extent=0.02, text_labels=("cube",),
    )
    return WorldState(robot=robot, objects=(table, cube))


def _run_skill(world, skill, max_steps, extra_steps=0, dt=0.02):
    commands, signals = [], []
    done_at = None
    for i in range(max_steps):
        obs = render_observation(world, BANK)
        atts = compute_attention(obs, BANK, skill.spec.text_queries)
        out = skill_step(skill, obs, atts)
        assert 0.0 <= out.end_signal <= 1.0
        commands.append(out.command)
        signals.append(out.end_signal)
        world = step(world, out.command, dt)
        if out.end_signal >= 1.0:
            done_at = i
            if extra_steps == 0:
                break
            extra_steps -= 1
    return world, commands, signals, done_at


def test_grasp_skill_picks_up_the_cube():
    spec = SkillSpec(name="grasp", kind="analytical", text_queries=("cube",),
                     parameters={"behavior": "grasp"})
    skill = make_skill(spec, bank=BANK)
    world, commands, signals, done_at = _run_skill(_grasp_world(), skill, 1200)
    assert done_at is not None, "grasp never signaled completion"
    held = world.attached_object
    assert held is not None and held.id == "cube1"
    # retract actually lifted the object
    assert held.pose.translation[2] > 0.40
    # end signal is zero right up to the terminal stage
    assert all(s == 0.0 for s in signals[:-1])
    assert signals[-1] == 1.0


def test_grasp_terminal_stage_is_a_fixed_point():
    spec = SkillSpec(name="grasp", kind="analytical", text_queries=("cube",),
                     parameters={"behavior": "grasp"})
    skill = make_skill(spec, bank=BANK)
    world, commands, signals, done_at = _run_skill(_grasp_world(), skill, 1200, extra_steps=10)
    assert done_at is not None
    tail = commands[done_at:]
    assert all(s == 1.0 for s in signals[done_at:])
    for cmd in tail:
        assert np.allclose(cmd.base.linear_velocity, 0.0)
        assert cmd.base.angular_velocity == 0.0
        assert cmd.ee_target is None
        assert cmd.gripper.closed


def test_grasp_replay_is_deterministic():
    spec = SkillSpec(name="grasp", kind="analytical", text_queries=("cube",),
                     parameters={"behavior": "grasp"})
    runs = []
    for _ in range(2):
        skill = make_skill(spec, bank=BANK)
        world, commands, signals, done_at = _run_skill(_grasp_world(), skill, 1200)
        runs.append((
            tuple(encode_action(c).tobytes() for c in commands),
            tuple(signals),
            world.robot.ee_pose.translation.tobytes(),
        ))
    assert runs[0] == runs[1]


def test_grasp_requires_a_known_query_embedding():
    spec = SkillSpec(name="grasp", kind="analytical", text_queries=("mug",),
                     parameters={"behavior": "grasp"})
    with pytest.raises(ConfigError):
        make_skill(spec, bank=BANK)
    spec_empty = SkillSpec(name="grasp", kind="analytical", parameters={"behavior": "grasp"})
    with pytest.raises(ConfigError):
        make_skill(spec_empty, bank=BANK)


def test_press_skill_latches_the_button_and_withdraws():
    robot = initial_robot_state(CFG)
    button = WorldObject(
        id="btn1", category="button", pose=Pose.from_yaw(0.0, [0.52, -0.04, 0.35]),
        pressable=True, half_extent=0.015,
    )
    world = WorldState(robot=robot, objects=(button,))
    spec = SkillSpec(name="press", kind="analytical", text_queries=("button",),
                     parameters={"behavior": "press"})
    skill = make_skill(spec, bank=BANK)
    world, commands, signals, done_at = _run_skill(world, skill, 1200)
    assert done_at is not None, "press never signaled completion"
    assert world.object_by_id("btn1").pressed
    # tool tip ends clear of the button after the withdraw stage
    ee = world.robot.ee_pose.translation
    assert np.linalg.norm(ee - button.pose.translation) > 0.05


def test_place_skill_drops_the_carried_cube_into_the_bin():
    robot = dataclasses.replace(initial_robot_state(CFG), gripper_open_fraction=0.0)
    ee = robot.ee_pose
    cube_pose = Pose(np.eye(3), ee.translation)
    cube = WorldObject(
        id="cube1", category="cube", pose=cube_pose, graspable=True, half_extent=0.02,
        attached_to_gripper=True, grasp_offset=compose(inverse(ee), cube_pose),
    )
    bin_obj = WorldObject(
        id="bin1", category="bin", pose=Pose.from_yaw(0.0, [0.60, -0.10, 0.0]),
        is_receptacle=True, footprint_radius=0.10, top_height=0.08,
    )
    world = WorldState(robot=robot, objects=(cube, bin_obj))
    spec = SkillSpec(name="place", kind="analytical", text_queries=("bin",),
                     parameters={"behavior": "place"})
    skill = make_skill(spec, bank=BANK)
    world, commands, signals, done_at = _run_skill(world, skill, 1200)
    assert done_at is not None, "place never signaled completion"
    dropped = world.object_by_id("cube1")
    assert not dropped.attached_to_gripper
    # landed on the bin rim support height, inside the footprint
    assert dropped.pose.translation[2] == pytest.approx(0.10, abs=1e-9)
    assert math.hypot(dropped.pose.translation[0] - 0.60,
                      dropped.pose.translation[1] + 0.10) <= 0.10


def test_skill_spec_validation():
    with pytest.raises(RejectedInputError):
        SkillSpec(name="", kind="analytical")
    with pytest.raises(RejectedInputError):
        SkillSpec(name="x", kind="scripted")
    with pytest.raises(RejectedInputError):
        SkillStepOutput(command=WholeBodyCommand(), end_signal=1.5)


# ---------------------------------------------------------------------------
# retrieval policy and temporal ensembling


def _tiny_policy(k=4):
    rng = np.random.default_rng(3)
    features = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    actions = rng.normal(size=(3, 12))
    actions[:, 10:] = rng.integers(0, 2, size=(3, 2))
    ends = np.array([0.0, 0.0, 1.0])
    return ChunkedPolicy.build(features, actions, ends, chunk_size=k)


def test_policy_zero_distance_returns_the_stored_chunk():
    policy = _tiny_policy()
    chunk, ends = policy_infer(policy, np.array([1.0, 0.0]))
    assert np.array_equal(chunk, policy.action_chunks[1])
    assert np.array_equal(ends, policy.end_chunks[1])


def test_policy_picks_the_nearer_neighbor_and_breaks_ties_low():
    policy = _tiny_policy()
    chunk, _ = policy_infer(policy, np.array([0.7, 0.0]))
    assert np.array_equal(chunk, policy.action_chunks[1])
    # exact midpoint between rows 0 and 1 resolves to the lower index
    chunk, _ = policy_infer(policy, np.array([0.5, 0.0]))
    assert np.array_equal(chunk, policy.action_chunks[0])


def test_policy_chunks_pad_by_repeating_the_last_action():
    policy = _tiny_policy(k=6)
    # dataset has 3 frames, chunk 6: rows beyond the end repeat frame 2
    last = policy.action_chunks[1]
    assert np.array_equal(last[2], last[3])
    assert np.array_equal(last[2], last[5])
    assert policy.end_chunks[0][-1] == 1.0


def test_temporal_ensemble_matches_the_hand_computed_example():
    # weights exp(-m*age) with m = ln 2: 1 and 0.5, normalized
    entries = [(0, np.array([0.1])), (1, np.array([0.3]))]
    blended = temporal_ensemble(entries, decay=math.log(2.0), layout="linear")
    assert blended[0] == pytest.approx(1.0 / 6.0, abs=1e-12)


def test_temporal_ensemble_gripper_votes_by_weighted_majority():
    base = np.zeros(12)
    closed = base.copy()
    closed[10] = 1.0
    entries = [(0, base.copy()), (1, closed.copy()), (2, closed.copy())]
    blended = temporal_ensemble(entries, decay=0.1)
    assert blended[10] == 1.0
    entries = [(0, closed.copy()), (1, base.copy()), (2, base.copy())]
    blended = temporal_ensemble(entries, decay=0.1)
    assert blended[10] == 0.0


def test_temporal_ensemble_aligns_quaternion_signs():
    vec_a = np.zeros(12)
    vec_a[6:10] = [0.5, 0.5, 0.5, 0.5]
    vec_a[11] = 1.0
    vec_b = vec_a.copy()
    vec_b[6:10] = [-0.5, -0.5, -0.5, -0.5]
    blended = temporal_ensemble([(0, vec_a), (1, vec_b)], decay=0.1)
    assert np.allclose(np.abs(blended[6:10]), 0.5, atol=1e-12)
    assert np.linalg.norm(blended[6:10]) == pytest.approx(1.0, abs=1e-12)


def test_temporal_ensemble_rejects_empty_input():
    with pytest.raises(RejectedInputError):
        temporal_ensemble([], decay=0.1)


def test_action_codec_round_trips_commands():
    cmd = WholeBodyCommand(
        base=BaseCommand(np.array([0.2, -0.1]), 0.3),
        ee_target=Pose.from_axis_angle([0.0, 0.0, 1.0], 0.7, [0.4, 0.1, 0.3]),
        gripper=GripperCommand.close(),
    )
    back = decode_action(encode_action(cmd))
    assert np.allclose(back.base.linear_velocity, cmd.base.linear_velocity)
    assert back.base.angular_velocity == pytest.approx(0.3)
    assert back.gripper.closed
    assert np.allclose(back.ee_target.translation, cmd.ee_target.translation)
    assert np.allclose(back.ee_target.rotation, cmd.ee_target.rotation, atol=1e-12)
    hold = decode_action(encode_action(WholeBodyCommand()))
    assert hold.ee_target is None and not hold.gripper.closed


def test_policy_save_load_round_trip(tmp_path):
    policy = _tiny_policy()
    path = tmp_path / "policy.bin"
    save_policy(policy, path)
    loaded = load_policy(path)
    assert loaded.chunk_size == policy.chunk_size
    assert loaded.decay == policy.decay
    assert loaded.neighbors == policy.neighbors
    assert np.array_equal(loaded.features, policy.features)
    assert np.array_equal(loaded.action_chunks, policy.action_chunks)
    assert np.array_equal(loaded.end_chunks, policy.end_chunks)
    save_policy(loaded, tmp_path / "again.bin")
    assert (tmp_path / "again.bin").read_bytes() == path.read_bytes()


def test_policy_load_rejects_corruption(tmp_path):
    policy = _tiny_policy()
    path = tmp_path / "policy.bin"
    save_policy(policy, path)
    raw = path.read_bytes()
    (tmp_path / "short.bin").write_bytes(raw[:-5])
    with pytest.raises(CorruptFileError):
        load_policy(tmp_path / "short.bin")
    (tmp_path / "long.bin").write_bytes(raw + b"x")
    with pytest.raises(CorruptFileError):
        load_policy(tmp_path / "long.bin")
    (tmp_path / "bad.bin").write_bytes(b"junk\n" + raw)
    with pytest.raises(CorruptFileError):
        load_policy(tmp_path / "bad.bin")


def _scripted_commands(world, steps=70):
    """Small deterministic end-effector orbit used as a stand-in teleop demo.
    Targets are expressed in the arm-base frame, like recorded teleop. Every
    tick commands a fresh pose so no two recorded observations coincide
    exactly; retrieval cannot distinguish bit-identical frames."""
    home = compose(inverse(mount_pose(world.robot)), world.robot.ee_pose)
    cmds = []
    for i in range(steps):
        ang = 0.06 * i
        offset = np.array([0.04 * math.cos(ang), 0.04 * math.sin(ang), 0.01 * math.sin(0.5 * ang)])
        target = Pose(home.rotation, home.translation + offset)
        cmds.append(WholeBodyCommand(ee_target=target, gripper=GripperCommand.open()))
    return cmds


def test_noiseless_replay_reproduces_the_demonstration():
    spec = SkillSpec(name="orbit", kind="learned", text_queries=("cube",),
                     parameters={"behavior": "imitation"})
    world0 = _grasp_world()

    # record: mount-frame commands plus the features seen at each tick
    world = world0
    feats, acts = [], []
    scripted = _scripted_commands(world0)
    for world_cmd in scripted:
        obs = render_observation(world, BANK)
        att = compute_attention(obs, BANK, ("cube",))
        feats.append(policy_features(obs, att["cube"]["head"]))
        acts.append(encode_action(world_cmd))
        world = step(world, world_cmd, 0.02)
    recorded_final = world.robot.ee_pose.translation

    ends = label_end_signal(len(acts), TerminationConfig())
    policy = ChunkedPolicy.build(np.array(feats), np.array(acts), ends, chunk_size=20)
    skill = make_skill(spec, bank=BANK, policy=policy)

    world = world0
    max_dev = 0.0
    for i in range(len(acts)):
        obs = render_observation(world, BANK)
        att = compute_attention(obs, BANK, skill.spec.text_queries)
        out = skill_step(skill, obs, att)
        max_dev = max(max_dev, float(np.max(np.abs(encode_action(out.command) - acts[i]))))
        world = step(world, out.command, 0.02)
    assert max_dev < 1e-6
    assert np.linalg.norm(world.robot.ee_pose.translation - recorded_final) < 1e-9


def test_imitation_end_signal_rises_at_the_tail():
    spec = SkillSpec(name="orbit", kind="learned", text_queries=("cube",),
                     parameters={"behavior": "imitation"})
    world0 = _grasp_world()
    world = world0
    feats, acts = [], []
    for world_cmd in _scripted_commands(world0, steps=40):
        obs = render_observation(world, BANK)
        att = compute_attention(obs, BANK, ("cube",))
        feats.append(policy_features(obs, att["cube"]["head"]))
        acts.append(encode_action(world_cmd))
        world = step(world, world_cmd, 0.02)
    ends = label_end_signal(len(acts), TerminationConfig())
    policy = ChunkedPolicy.build(np.array(feats), np.array(acts), ends, chunk_size=20)
    skill = make_skill(spec, bank=BANK, policy=policy)

    world = world0
    signals = []
    for _ in range(len(acts)):
        obs = render_observation(world, BANK)
        att = compute_attention(obs, BANK, skill.spec.text_queries)
        out = skill_step(skill, obs, att)
        signals.append(out.end_signal)
        world = step(world, out.command, 0.02)
    assert signals[0] < 0.5
    assert signals[-1] > 0.8
    assert detect_termination(signals, TerminationConfig(window=5)) is not None


# ---------------------------------------------------------------------------
# library manifest and factory


def test_default_skill_library_loads():
    library = load_skill_library()
    assert {"navigate", "grasp", "place", "press"} <= set(library)
    assert library["grasp"].kind == "analytical"
    assert library["grasp"].parameters["approach_height"] == pytest.approx(0.15)
    assert library["press"].parameters["press_depth"] == pytest.approx(0.02)


def test_skill_library_rejects_bad_manifests(tmp_path):
    bad = tmp_path / "skills.yaml"
    bad.write_text("schema_version: 1\nskills:\n  - name: fly\n    kind: magic\n")
    with pytest.raises(ConfigError):
        load_skill_library(bad)
    dup = tmp_path / "dup.yaml"
    dup.write_text(
        "schema_version: 1\nskills:\n"
        "  - name: a\n    kind: analytical\n    parameters: {behavior: grasp}\n"
        "  - name: a\n    kind: analytical\n    parameters: {behavior: press}\n"
    )
    with pytest.raises(ConfigError):
        load_skill_library(dup)


def test_make_skill_dispatches_on_behavior():
    grasp_spec = SkillSpec(name="g", kind="analytical", text_queries=("cube",),
                           parameters={"behavior": "grasp"})
    assert isinstance(make_skill(grasp_spec, bank=BANK), GraspSkill)
    nav_spec = SkillSpec(name="n", kind="analytical", parameters={"behavior": "navigate", "waypoint": "w"})
    nav = make_skill(nav_spec, waypoints={"w": Pose.from_yaw(0.3, [1.0, 0.0, 0.0])})
    assert isinstance(nav, NavigationSkill)
    with pytest.raises(ConfigError):
        make_skill(nav_spec, waypoints={})
    with pytest.raises(ConfigError):
        make_skill(SkillSpec(name="u", kind="analytical", parameters={"behavior": "hover"}))
    learned = SkillSpec(name="l", kind="learned", text_queries=("cube",),
                        parameters={"behavior": "imitation"})
    with pytest.raises(ConfigError):
        make_skill(learned, bank=BANK)  # no policy supplied
