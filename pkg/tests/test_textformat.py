import numpy as np
import pytest

from safevi.environments import CliffworldParams, build_cliffworld
from safevi.textformat import MdpFormatError, format_mdp, load_mdp, dump_mdp, parse_mdp


def _same(a, b):
    assert a.state_names == b.state_names
    assert a.action_names == b.action_names
    assert a.gamma == b.gamma
    for field in ("terminal", "failure", "available", "transitions", "rewards"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))


def test_round_trip_counter(counter):
    _same(parse_mdp(format_mdp(counter)), counter)


def test_round_trip_cliff_exclude_mode(tmp_path):
    spec = build_cliffworld(CliffworldParams(slip=0.25, slip_mode="exclude"))
    path = tmp_path / "cliff.mdp"
    dump_mdp(spec, path)
    _same(load_mdp(path), spec)
    assert format_mdp(load_mdp(path)) == path.read_text()


def test_comments_and_whitespace():
    text = """
    # tiny
    states
    a
    F  T F   # failure
    actions
    go
    gamma 0.5
    transition a go F 1.0 -2
    terminal_reward F go 0
    """
    spec = parse_mdp(text)
    assert spec.failure.tolist() == [False, True]
    assert spec.rewards[0, 0, 1] == -2.0


@pytest.mark.parametrize("bad", [
    "states\na\nactions\ngo\ngamma 0.5\ntransition a go b 1 0\n",
    "states\na\nactions\ngo\ngamma x\n",
    "states\na Q\nactions\ngo\n",
])
def test_malformed_input(bad):
    with pytest.raises(MdpFormatError):
        parse_mdp(bad)
