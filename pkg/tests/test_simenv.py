import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from screenrl.actions import KIND_BY_NAME, Action
from screenrl.simenv import (CoverageMismatch, EnvironmentCrashed, GenerationError, Screen, SimApp, SimEnvironment,
                             SimWidget, Transition, Trigger, coverage, generate_app, ground_truth, render,
                             scaled_boxes)
from screenrl.vision import WidgetBox, canny_edges, extract_widget_boxes


def act(name, target=None, box=None, parameter=None):
    return Action(KIND_BY_NAME[name], target, box, parameter=parameter)


def line_app(guard=None, crash=False):
    """Three screens 0 -> 1 -> 2, each with one button at the same place."""
    button = SimWidget(WidgetBox(40, 40, 100, 36), "Button", 1)
    edit = SimWidget(WidgetBox(40, 120, 160, 36), "EditText", 2)
    screens = tuple(Screen(i, (button, edit), 235) for i in range(3))
    click = Trigger("click", 0, None)
    transitions = (Transition(0, click, 1, guard), Transition(1, click, 2))
    crashes = ((2, Trigger("long_click", 0, None)),) if crash else ()
    return SimApp(seed=0, width=320, height=480, screens=screens, start=0, transitions=transitions, crashes=crashes)


def click(box=WidgetBox(40, 40, 100, 36), name="click"):
    return act(name, 0, box)


def step(screen, nxt, transition=None, crash_id=None):
    return {"env": {"screen": screen, "next_screen": nxt, "transition": transition, "crash_id": crash_id}}


class TestGeneration:
    def test_same_seed_identical_json(self):
        assert generate_app(9).to_json() == generate_app(9).to_json()
        assert generate_app(9).digest() != generate_app(10).digest()

    def test_json_round_trip(self, tmp_path):
        app = generate_app(4)
        app.save(tmp_path / "a.json")
        back = SimApp.load(tmp_path / "a.json")
        assert back == app and back.to_json() == app.to_json()

    def test_two_screens_reachable(self):
        app = generate_app(1, n_screens=2)
        assert app.reachable() == {0, 1}

    def test_no_crashes_when_rate_zero(self):
        assert generate_app(3, crash_rate=0.0).crashes == ()

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000))
    def test_mostly_reachable_and_inside(self, seed):
        app = generate_app(seed)
        assert len(app.reachable()) >= 0.8 * len(app.screens)
        for s in app.screens:
            assert all(w.box.inside(app.width, app.height) for w in s.widgets)

    def test_invalid_parameters(self):
        with pytest.raises(GenerationError):
            generate_app(0, n_screens=1)
        with pytest.raises(GenerationError):
            generate_app(0, edge_density=1.5)
        with pytest.raises(GenerationError):
            generate_app(0, widgets_per_screen=(5, 2))

    def test_infeasible_packing(self):
        with pytest.raises(GenerationError):
            generate_app(0, widgets_per_screen=(40, 40), width=120, height=120)

    def test_transitions_unique_per_trigger(self):
        app = generate_app(7, edge_density=1.0)
        keys = [(t.source, t.trigger.key()) for t in app.transitions]
        assert len(keys) == len(set(keys))
        trans_keys = set(keys)
        assert not any((s, t.key()) in trans_keys for s, t in app.crashes)


class TestRendering:
    def test_blank_screen_has_no_boxes(self):
        app = SimApp(0, 320, 480, (Screen(0, (), 235), Screen(1, (), 235)), 0, (), ())
        assert extract_widget_boxes(canny_edges(render(app, 0))) == []

    def test_render_deterministic(self, app):
        assert np.array_equal(render(app, 2).data, render(app, 2).data)

    def test_rotated_render_matches_scaled_ground_truth(self, app):
        img = render(app, 0, 480, 320)
        assert img.width == 480 and img.height == 320
        assert [b for b, _ in ground_truth(app, 0, 480, 320)] == scaled_boxes(app, 0, 480, 320)


class TestRuntime:
    def test_click_moves_and_return_pops(self):
        env = SimEnvironment(line_app())
        out = env.execute(click())
        assert (out.kind, out.screen, out.transition) == ("moved", 1, 0)
        assert env.execute(click()).screen == 2
        assert env.execute(act("return")).screen == 1
        assert env.execute(act("return")).screen == 0
        assert env.execute(act("return")).kind == "stayed"  # nothing left on the stack

    def test_unbound_action_stays(self):
        env = SimEnvironment(line_app())
        assert env.execute(click(name="double_click")).kind == "stayed"
        assert env.execute(click(WidgetBox(250, 400, 20, 20))).kind == "stayed"  # misses every widget
        assert env.screen == 0

    def test_point_tap_hits_widget(self):
        env = SimEnvironment(line_app())
        assert env.execute(click(WidgetBox(60, 50, 1, 1))).screen == 1

    def test_crash_requires_reset(self):
        env = SimEnvironment(line_app(crash=True))
        env.execute(click())
        env.execute(click())
        out = env.execute(click(name="long_click"))
        assert out.kind == "crashed" and out.crash_id == 0
        with pytest.raises(EnvironmentCrashed):
            env.execute(act("return"))
        assert env.reset().screen == 0
        assert env.execute(click()).kind == "moved"

    @pytest.mark.parametrize("guard,unlock", [
        ("permission", [act("access_grant")]),
        ("offline", [act("network_switch")]),
        ("input", [act("input", 1, WidgetBox(40, 120, 160, 36))]),
    ])
    def test_guards(self, guard, unlock):
        env = SimEnvironment(line_app(guard))
        assert env.execute(click()).kind == "stayed"
        for a in unlock:
            env.execute(a)
        assert env.execute(click()).screen == 1

    def test_denied_permission_locks_again(self):
        env = SimEnvironment(line_app("permission"))
        env.execute(act("access_grant"))
        env.execute(act("access_deny"))
        assert env.execute(click()).kind == "stayed"

    def test_orientation_changes_size_and_hit_boxes(self):
        env = SimEnvironment(line_app())
        env.execute(act("orientation_switch", parameter=1.0))
        assert env.size == (480, 320) and env.screenshot().width == 480
        scaled = scaled_boxes(env.app, 0, 480, 320)[0]
        assert env.execute(click(scaled)).screen == 1
        env.execute(act("orientation_switch", parameter=0.0))
        assert env.size == (320, 480)

    def test_window_size(self):
        env = SimEnvironment(line_app())
        env.execute(act("window_size", parameter=0.5))
        assert env.size == (160, 240)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 31), st.integers(1, 60))
    def test_stack_soundness(self, seed, n):
        """Screens on the return stack are always ones the session has visited."""
        from screenrl.embedding import TYPE_ID, WIDGET_TYPES  # noqa: F401
        app = generate_app(seed % 50, crash_rate=0.0)
        env = SimEnvironment(app)
        rng = np.random.default_rng(seed)
        visited = {env.screen}
        for _ in range(n):
            sc = app.screens[env.screen]
            if sc.widgets and rng.random() < 0.8:
                slot = int(rng.integers(len(sc.widgets)))
                env.execute(act("click", slot, scaled_boxes(app, env.screen, *env.size)[slot]))
            else:
                env.execute(act("return"))
            visited.add(env.screen)
            assert set(env.stack) <= visited


class TestCoverage:
    def test_line_graph(self):
        app = line_app()
        cov = coverage(app, [step(0, 1, 0), step(1, 1)])
        assert cov["screen_coverage"] == pytest.approx(2 / 3)
        assert cov["transition_coverage"] == 0.5
        assert cov["screen_curve"] == pytest.approx([2 / 3, 2 / 3])

    def test_empty_log(self):
        cov = coverage(line_app(), [])
        assert cov["screen_coverage"] == 0.0 and cov["transition_coverage"] == 0.0 and cov["crashes"] == []

    def test_mismatch(self):
        app = line_app()
        with pytest.raises(CoverageMismatch):
            coverage(app, [step(0, 7)])
        with pytest.raises(CoverageMismatch):
            coverage(app, [step(0, 1, 5)])
        with pytest.raises(CoverageMismatch):
            coverage(app, [], app_digest="0" * 16)

    def test_curves_monotone(self, app):
        rng = np.random.default_rng(0)
        env = SimEnvironment(app)
        records = []
        for _ in range(200):
            sc = app.screens[env.screen]
            slot = int(rng.integers(len(sc.widgets)))
            before = env.screen
            out = env.execute(act("click", slot, scaled_boxes(app, env.screen, *env.size)[slot]))
            records.append(step(before, out.screen, out.transition, out.crash_id))
            if out.kind == "crashed":
                env.reset()
        cov = coverage(app, records, app.digest())
        for key in ("screen_curve", "transition_curve", "crash_curve"):
            c = cov[key]
            assert all(b >= a for a, b in zip(c, c[1:]))
        assert cov["screen_curve"][-1] == cov["screen_coverage"]
