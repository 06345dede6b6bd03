import pytest
from hypothesis import given, strategies as st

from derecho.events import KINDS, ProtocolEvent
from derecho.sim import SimConfig, simulate
from derecho.trace import TraceFormatError, dumps_event, loads_event, read_trace, write_trace

maybe_int = st.none() | st.integers(0, 10 ** 6)

event_strategy = st.builds(
    ProtocolEvent,
    kind=st.sampled_from(KINDS),
    node=st.integers(0, 100),
    vid=st.integers(0, 100),
    step=st.integers(0, 10 ** 9),
    t=st.integers(0, 10 ** 6),
    gidx=maybe_int,
    client_id=maybe_int,
    request_id=maybe_int,
    payload_digest=st.none() | st.text("0123456789abcdef", min_size=16, max_size=16),
    members=st.none() | st.lists(st.integers(0, 9), unique=True).map(tuple),
)


@given(event_strategy)
def test_event_round_trip(event):
    line = dumps_event(event)
    assert "\n" not in line
    assert loads_event(line) == event


def test_file_round_trip(tmp_path):
    events = simulate(SimConfig(num_requests_per_client=5, test_failure=True,
                                fail_after=20))[1].events
    path = tmp_path / "run.jsonl"
    write_trace(path, events)
    assert read_trace(path) == events
    assert len(path.read_text().splitlines()) == len(events)


def test_records_have_fixed_field_order():
    line = dumps_event(ProtocolEvent(kind="execute", node=1, vid=0, gidx=3))
    assert line.startswith('{"kind":"execute","node":1,"vid":0,"gidx":3,')


@pytest.mark.parametrize("text,line_no,fragment", [
    ('{"kind":"execute"', 1, "malformed"),
    ('[1,2]', 1, "not an object"),
    ('{"kind":"execute","node":0,"vid":0,"t":0}', 1, "missing"),
    ('{"kind":"bogus","node":0,"vid":0,"t":0,"step":0}', 1, "unknown event kind"),
    ('{"kind":"execute","node":"a","vid":0,"t":0,"step":0}', 1, "integer"),
    ('{"kind":"execute","node":0,"vid":0,"t":0,"step":0,"extra":1}', 1, "unknown fields"),
])
def test_bad_records_name_the_line(tmp_path, text, line_no, fragment):
    good = '{"kind":"execute","node":0,"vid":0,"t":0,"step":0}\n'
    path = tmp_path / "bad.jsonl"
    path.write_text(good + text + "\n")
    with pytest.raises(TraceFormatError) as info:
        read_trace(path)
    assert info.value.line_no == line_no + 1
    assert fragment in str(info.value)


def test_truncated_file_rejected(tmp_path):
    path = tmp_path / "cut.jsonl"
    path.write_text('{"kind":"execute","node":0,"vid":0,"t":0,"step":0}\n{"kind":"exe')
    with pytest.raises(TraceFormatError) as info:
        read_trace(path)
    assert info.value.line_no == 2


def test_empty_file_is_empty_trace(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert read_trace(path) == []
