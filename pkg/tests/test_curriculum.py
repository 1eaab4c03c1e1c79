import math
from collections import deque

import pytest
from hypothesis import given, settings, strategies as st

from sgnav.curriculum import CurriculumConfig, CurriculumState, DifficultyLevel, start_level, write_history
from sgnav.env import Mode

P, C = Mode.POLICY, Mode.CONTROL


def fill(state, successes, total=30):
    for i in range(total):
        state.record_outcome(i < successes, P)
    return state


def test_start_level():
    assert start_level() == DifficultyLevel(0, 0.5, 0.0)
    assert start_level(CurriculumConfig(R_min=0.0)) == DifficultyLevel(0, 0.0, 0.0)
    s = fill(CurriculumState(), 30)
    assert s.maybe_advance()
    assert (s.current.R, s.current.phi) == (0.5, math.pi / 8)


def test_control_episodes_excluded():
    s = CurriculumState()
    for _ in range(30):
        s.record_outcome(True, C)
    assert len(s.window) == 0 and not s.maybe_advance()


def test_window_capacity():
    s = CurriculumState()
    for _ in range(31):
        s.record_outcome(True, P)
    assert list(s.window) == [True] * 30


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.sampled_from([P, C])), max_size=80))
def test_window_equals_filter_then_tail(seq):
    s = CurriculumState()
    for ok, mode in seq:
        s.record_outcome(ok, mode)
    assert list(s.window) == [ok for ok, m in seq if m is P][-30:]
    assert s.episodes == len(seq)


def test_26_of_30_advances_phi():
    s = fill(CurriculumState(), 26)
    assert s.maybe_advance()
    assert s.current == DifficultyLevel(1, 0.5, math.pi / 8)
    assert len(s.window) == 0


def test_25_of_30_does_not_advance():
    s = fill(CurriculumState(), 25)
    assert not s.maybe_advance()
    assert s.current == start_level()


def test_phi_max_resets_and_raises_R():
    cfg = CurriculumConfig()
    s = CurriculumState(cfg, DifficultyLevel(8, 1.0, math.pi))
    fill(s, 27)
    assert s.maybe_advance()
    assert s.current == DifficultyLevel(9, 1.5, 0.0)


def test_phi_capped_and_R_capped():
    cfg = CurriculumConfig(delta_phi=1.0, delta_R=2.0)
    s = CurriculumState(cfg, DifficultyLevel(0, 2.0, 3.0))
    fill(s, 30)
    s.maybe_advance()
    assert s.current.phi == math.pi
    fill(s, 30)
    s.maybe_advance()
    assert s.current.R == 3.0 and s.current.phi == 0.0


def test_top_level_never_advances():
    s = CurriculumState(CurriculumConfig(), DifficultyLevel(40, 3.0, math.pi))
    fill(s, 30)
    assert not s.maybe_advance()
    assert s.complete


def test_window_cleared_blocks_chaining():
    s = fill(CurriculumState(), 30)
    assert s.maybe_advance()
    for _ in range(29):
        s.record_outcome(True, P)
        assert not s.maybe_advance()
    s.record_outcome(True, P)
    assert s.maybe_advance()


def test_only_control_never_advances():
    s = CurriculumState()
    for _ in range(500):
        s.record_outcome(True, C)
        assert not s.maybe_advance()
    assert s.current == start_level()


def reference_machine(outcomes, cfg):
    """Straightforward re-statement of the rule used as an oracle."""
    R, phi = cfg.R_min, 0.0
    win = deque(maxlen=cfg.window)
    levels = [(R, phi)]
    for ok, mode in outcomes:
        if mode is P:
            win.append(ok)
        if len(win) == cfg.window and sum(win) / cfg.window > cfg.threshold \
                and not (phi >= cfg.phi_max and R >= cfg.R_max):
            if phi < cfg.phi_max:
                phi = min(phi + cfg.delta_phi, cfg.phi_max)
                if phi > cfg.phi_max - 1e-9:
                    phi = cfg.phi_max
            else:
                R, phi = min(R + cfg.delta_R, cfg.R_max), 0.0
            win.clear()
            levels.append((R, phi))
    return levels


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.booleans() | st.just(True), st.sampled_from([P, P, P, C])), max_size=600))
def test_matches_reference_and_is_monotone(seq):
    cfg = CurriculumConfig()
    s = CurriculumState(cfg)
    for ok, mode in seq:
        s.record_outcome(ok, mode)
        before = s.current
        advanced = s.maybe_advance()
        if advanced:
            after = s.current
            assert after.level_index == before.level_index + 1
            assert (after.R, after.phi) > (before.R, before.phi) or (after.R > before.R and after.phi == 0.0)
            assert not s.maybe_advance()  # at most one trigger per call
    assert [(lvl.R, lvl.phi) for _, lvl in s.history] == reference_machine(seq, cfg)


def test_full_ladder_length():
    s = CurriculumState()
    n = 0
    while not s.complete:
        fill(s, 30)
        assert s.maybe_advance()
        n += 1
    # 6 distances (0.5 .. 3.0), 8 heading steps each, 5 resets in between
    assert n == 6 * 8 + 5
    assert s.current == DifficultyLevel(n, 3.0, math.pi)


def test_history_csv(tmp_path):
    s = fill(CurriculumState(), 30)
    s.maybe_advance()
    write_history(s, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "episode,level_index,R,phi"
    assert lines[1] == "0,0,0.5,0.0"
    assert lines[2].startswith("30,1,0.5,")
    assert float(lines[2].split(",")[3]) == pytest.approx(math.pi / 8)
