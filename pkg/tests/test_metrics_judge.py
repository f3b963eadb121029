"""Judge protocol: prompt, payload layout, reply parsing, aggregation."""

import base64
import io
import string

import httpx
import numpy as np
import pytest

from logsplat.errors import JudgeTransportError
from logsplat.metrics import (
    HttpJudgeTransport,
    PreferenceRecord,
    REPLY_B,
    REPLY_C,
    REPLY_ERROR,
    WINNER_BASELINE,
    WINNER_INVALID,
    WINNER_OURS,
    aggregate_preferences,
    build_judge_task,
    format_preference_row,
    judge_request,
    load_judge_prompt,
    parse_judge_reply,
    record_from_reply,
    run_judge_tasks,
)

EXPECTED_PROMPT = (
    "You will receive exactly three images in this order:\n"
    "- A: reference image (object at the center of the image; may be partially occluded; background was masked out)\n"
    "- B: rendered image of a 3D reconstruction in random viewpoint\n"
    "- C: rendered image of another 3D reconstruction in random viewpoint\n"
    "\n"
    "Which of B or C is overall closer to the object in A (shape and appearance of the object itself)?\n"
    "Ignore differences that are mainly due to random viewpoint, scale, translation, or occlusion of the object.\n"
    "\n"
    "Reply with exactly one bracket containing a single token:\n"
    "- B if B is closer to the reference object\n"
    "- C if C is closer\n"
    "- ERROR if you did not receive exactly three images\n"
    "\n"
    "Format: [X] where X is B, C, or ERROR. No other text."
)


def solid(r, g, b, size=8):
    img = np.zeros((size, size, 3))
    img[..., 0], img[..., 1], img[..., 2] = r, g, b
    return img


def decode_attachment(att):
    from PIL import Image

    url = att["image_url"]["url"]
    prefix = "data:image/png;base64,"
    assert url.startswith(prefix)
    raw = base64.b64decode(url[len(prefix):])
    return np.asarray(Image.open(io.BytesIO(raw))).astype(np.float64) / 255.0


def test_prompt_resource_is_verbatim():
    assert load_judge_prompt() == EXPECTED_PROMPT


def test_judge_request_payload_layout():
    ref, b, c = solid(1, 0, 0), solid(0, 1, 0), solid(0, 0, 1)
    payload = judge_request(ref, b, c, model="gpt-5.2")
    assert payload["model"] == "gpt-5.2"
    system, user = payload["messages"]
    assert system == {"role": "system", "content": EXPECTED_PROMPT}
    assert user["role"] == "user"
    atts = user["content"]
    assert len(atts) == 3
    for att, src in zip(atts, (ref, b, c)):
        np.testing.assert_allclose(decode_attachment(att), src, atol=1 / 255)


def test_task_payload_respects_slot():
    ref, ours, base = solid(1, 1, 1), solid(1, 0, 0), solid(0, 0, 1)
    rng = np.random.default_rng(0)
    task = build_judge_task("i0", "vru_pedestrian", "baseline_x", ref, ours, base, rng)
    payload = task.payload()
    atts = payload["messages"][1]["content"]
    slot_b = decode_attachment(atts[1])
    slot_c = decode_attachment(atts[2])
    if task.ours_slot == REPLY_B:
        np.testing.assert_allclose(slot_b, ours, atol=1 / 255)
        np.testing.assert_allclose(slot_c, base, atol=1 / 255)
    else:
        np.testing.assert_allclose(slot_b, base, atol=1 / 255)
        np.testing.assert_allclose(slot_c, ours, atol=1 / 255)


def test_assignment_draws_are_seeded_and_mixed():
    def draw_sequence(seed, n=64):
        rng = np.random.default_rng(seed)
        ref = solid(0, 0, 0, size=2)
        return [
            build_judge_task(f"i{k}", "other", "b", ref, ref, ref, rng).ours_slot
            for k in range(n)
        ]

    first = draw_sequence(42)
    assert draw_sequence(42) == first
    assert REPLY_B in first and REPLY_C in first
    assert draw_sequence(43) != first


@pytest.mark.parametrize(
    "text,expected",
    [
        ("[B]", REPLY_B),
        (" [C]\n", REPLY_C),
        ("\t[B]  ", REPLY_B),
        ("[ERROR]", REPLY_ERROR),
        ("B is better", REPLY_ERROR),
        ("[b]", REPLY_ERROR),
        ("[B] trailing", REPLY_ERROR),
        ("[[B]]", REPLY_ERROR),
        ("", REPLY_ERROR),
        (b"[C]", REPLY_C),
        (None, REPLY_ERROR),
        (42, REPLY_ERROR),
    ],
)
def test_parse_judge_reply_cases(text, expected):
    assert parse_judge_reply(text) == expected


def test_parse_judge_reply_total_on_fuzz():
    rng = np.random.default_rng(99)
    alphabet = string.printable + "[]BCERROR"
    outcomes = set()
    for _ in range(20_000):
        n = int(rng.integers(0, 24))
        s = "".join(alphabet[int(k)] for k in rng.integers(0, len(alphabet), size=n))
        outcomes.add(parse_judge_reply(s))
    raw = bytes(rng.integers(0, 256, size=64, dtype=np.uint8).tolist())
    outcomes.add(parse_judge_reply(raw))
    assert outcomes <= {REPLY_B, REPLY_C, REPLY_ERROR}


@pytest.mark.parametrize(
    "slot,reply,winner",
    [
        (REPLY_B, REPLY_B, WINNER_OURS),
        (REPLY_B, REPLY_C, WINNER_BASELINE),
        (REPLY_C, REPLY_C, WINNER_OURS),
        (REPLY_C, REPLY_B, WINNER_BASELINE),
        (REPLY_B, REPLY_ERROR, WINNER_INVALID),
        (REPLY_C, REPLY_ERROR, WINNER_INVALID),
    ],
)
def test_resolved_winner(slot, reply, winner):
    rec = PreferenceRecord("i", "vru_pedestrian", "b", slot, reply)
    assert rec.resolved_winner == winner
    assert rec.to_dict()["resolved_winner"] == winner


def rec(cls, winner, baseline="b"):
    # Build a record whose resolved_winner comes out as requested.
    if winner == WINNER_INVALID:
        return PreferenceRecord("i", cls, baseline, REPLY_B, REPLY_ERROR)
    reply = REPLY_B if winner == WINNER_OURS else REPLY_C
    return PreferenceRecord("i", cls, baseline, REPLY_B, reply)


def test_aggregate_three_of_four():
    records = [
        rec("vru_pedestrian", WINNER_OURS),
        rec("vru_pedestrian", WINNER_OURS),
        rec("vru_pedestrian", WINNER_OURS),
        rec("vru_pedestrian", WINNER_BASELINE),
        rec("vru_pedestrian", WINNER_INVALID),
    ]
    out = aggregate_preferences(records)
    cell = out["b"]["per_class"]["vru_pedestrian"]
    assert cell["n_valid"] == 4 and cell["n_invalid"] == 1
    assert cell["ours_pct"] == pytest.approx(75.0)
    assert cell["ours_pct"] + cell["baseline_pct"] == 100.0
    assert format_preference_row(cell["ours_pct"], cell["baseline_pct"]) == "75.0 / 25.0"


def test_aggregate_all_invalid_reports_absence():
    out = aggregate_preferences([rec("vru_rider", WINNER_INVALID)] * 3)
    cell = out["b"]["per_class"]["vru_rider"]
    assert cell["n_valid"] == 0 and "ours_pct" not in cell
    assert "macro" not in out["b"]


def test_aggregate_macro_averages_classes():
    records = (
        [rec("vru_pedestrian", WINNER_OURS)] * 3
        + [rec("vru_pedestrian", WINNER_BASELINE)]        # 75%
        + [rec("vru_rider", WINNER_OURS)]
        + [rec("vru_rider", WINNER_BASELINE)]             # 50%
        + [rec("other", WINNER_OURS, baseline="b2")]  # separate baseline
    )
    out = aggregate_preferences(records)
    macro = out["b"]["macro"]
    assert macro["n_classes"] == 2
    assert macro["ours_pct"] == pytest.approx(62.5)
    assert macro["ours_pct"] + macro["baseline_pct"] == 100.0
    assert out["b2"]["per_class"]["other"]["ours_pct"] == pytest.approx(100.0)


def test_aggregate_percentages_complement_exactly():
    # n = 3 exercises a non-representable rate; the pair must still sum
    # to exactly 100 because the complement is computed by subtraction.
    records = [rec("other", WINNER_OURS)] + [rec("other", WINNER_BASELINE)] * 2
    cell = aggregate_preferences(records)["b"]["per_class"]["other"]
    assert cell["ours_pct"] + cell["baseline_pct"] == 100.0


def make_tasks(n, seed=7):
    rng = np.random.default_rng(seed)
    ref = solid(0.5, 0.5, 0.5, size=2)
    return [
        build_judge_task(f"i{k}", "vru_pedestrian", "b", ref, ref, ref, rng)
        for k in range(n)
    ]


def test_run_judge_tasks_preserves_order():
    tasks = make_tasks(9)
    calls = []

    def transport(payload):
        calls.append(payload)
        return "[B]" if len(calls) % 2 else "[C]"

    records = run_judge_tasks(transport, tasks, max_in_flight=3)
    assert [r.instance_id for r in records] == [t.instance_id for t in tasks]
    assert len(calls) == 9
    assert run_judge_tasks(transport, [], max_in_flight=3) == []


def completion(content):
    return {"choices": [{"message": {"content": content}}]}


def test_http_transport_requires_token(monkeypatch):
    monkeypatch.delenv("JUDGE_API_TOKEN", raising=False)
    transport = HttpJudgeTransport("https://judge.test/v1/chat")
    with pytest.raises(JudgeTransportError):
        transport({"model": "m"})


def test_http_transport_success_and_auth(monkeypatch):
    monkeypatch.setenv("JUDGE_API_TOKEN", "sekrit")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json=completion(" [B] "))

    client = httpx.Client(transport=httpx.MockTransport(handler))
    transport = HttpJudgeTransport("https://judge.test/v1/chat", client=client)
    assert transport({"model": "m"}) == " [B] "
    assert seen["auth"] == "Bearer sekrit"


def test_http_transport_retries_server_errors(monkeypatch):
    monkeypatch.setenv("JUDGE_API_TOKEN", "t")
    attempts = {"n": 0}

    def flaky(request):
        attempts["n"] += 1
        if attempts["n"] <= 2:
            return httpx.Response(503)
        return httpx.Response(200, json=completion("[C]"))

    client = httpx.Client(transport=httpx.MockTransport(flaky))
    transport = HttpJudgeTransport("https://judge.test/v1", client=client)
    assert transport({}) == "[C]"
    assert attempts["n"] == 3

    always_down = httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(500)))
    t2 = HttpJudgeTransport("https://judge.test/v1", client=always_down, retries=2)
    with pytest.raises(JudgeTransportError):
        t2({})


def test_http_transport_client_error_is_fatal(monkeypatch):
    monkeypatch.setenv("JUDGE_API_TOKEN", "t")
    attempts = {"n": 0}

    def reject(request):
        attempts["n"] += 1
        return httpx.Response(401, text="bad key")

    client = httpx.Client(transport=httpx.MockTransport(reject))
    transport = HttpJudgeTransport("https://judge.test/v1", client=client)
    with pytest.raises(JudgeTransportError):
        transport({})
    assert attempts["n"] == 1  # 4xx is not retried


def test_http_transport_malformed_body_becomes_error_reply(monkeypatch):
    monkeypatch.setenv("JUDGE_API_TOKEN", "t")
    client = httpx.Client(
        transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"odd": 1}))
    )
    transport = HttpJudgeTransport("https://judge.test/v1", client=client)
    reply = transport({})
    assert parse_judge_reply(reply) == REPLY_ERROR
