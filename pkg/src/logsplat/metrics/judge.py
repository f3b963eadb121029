"""Pairwise preference judging over rendered views.

A vision-language judge receives a reference view plus one render from each
of two methods and answers which render is closer to the reference. The
system prompt is frozen as a versioned resource file; requests are plain
chat-completion payloads so any compatible endpoint works. Which method
lands in slot B is randomized per comparison to cancel position bias, and
the draw is recorded so a run can be replayed.
"""

from __future__ import annotations

import base64
import importlib.resources
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import JudgeTransportError, ShapeMismatch

PROMPT_RESOURCE = "judge_prompt_v1.txt"

DEFAULT_MODEL = "gpt-5.2"
DEFAULT_TOKEN_ENV = "JUDGE_API_TOKEN"
DEFAULT_TIMEOUT_S = 60.0
MAX_RETRIES = 2

REPLY_B = "B"
REPLY_C = "C"
REPLY_ERROR = "ERROR"

WINNER_OURS = "ours"
WINNER_BASELINE = "baseline"
WINNER_INVALID = "invalid"

_prompt_cache: str | None = None


def load_judge_prompt() -> str:
    """The judge system prompt, exactly as stored in the resource file."""
    global _prompt_cache
    if _prompt_cache is None:
        text = (
            importlib.resources.files("logsplat.metrics")
            .joinpath("resources", PROMPT_RESOURCE)
            .read_text(encoding="utf-8")
        )
        _prompt_cache = text.rstrip("\n")
    return _prompt_cache


def _image_to_data_uri(image: np.ndarray) -> str:
    from PIL import Image

    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeMismatch(f"expected (H, W, 3) image, got {arr.shape}")
    u8 = (np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(u8, mode="RGB").save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def judge_request(
    ref_img: np.ndarray,
    img_b: np.ndarray,
    img_c: np.ndarray,
    model: str = DEFAULT_MODEL,
) -> dict:
    """Chat-completion payload with the three images attached in order."""
    attachments = [
        {"type": "image_url", "image_url": {"url": _image_to_data_uri(img)}}
        for img in (ref_img, img_b, img_c)
    ]
    return {
        "model": model,
        "temperature": 0,
        "messages": [
            {"role": "system", "content": load_judge_prompt()},
            {"role": "user", "content": attachments},
        ],
    }


def parse_judge_reply(text) -> str:
    """Map a raw reply to B, C, or ERROR.

    Accepts exactly [B], [C], or [ERROR] modulo surrounding whitespace;
    everything else, including replies that merely mention a token,
    resolves to ERROR. Total over arbitrary input, never raises.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    if not isinstance(text, str):
        return REPLY_ERROR
    stripped = text.strip()
    if stripped == "[B]":
        return REPLY_B
    if stripped == "[C]":
        return REPLY_C
    return REPLY_ERROR


@dataclass(frozen=True)
class JudgeTask:
    """One pairwise comparison, slots already drawn."""

    instance_id: str
    class_label: str
    baseline_name: str
    ref_image: np.ndarray
    ours_image: np.ndarray
    baseline_image: np.ndarray
    ours_slot: str  # "B" or "C"

    def __post_init__(self):
        if self.ours_slot not in (REPLY_B, REPLY_C):
            raise ValueError(f"ours_slot must be B or C, got {self.ours_slot}")

    def payload(self, model: str = DEFAULT_MODEL) -> dict:
        if self.ours_slot == REPLY_B:
            return judge_request(self.ref_image, self.ours_image, self.baseline_image, model)
        return judge_request(self.ref_image, self.baseline_image, self.ours_image, model)


def build_judge_task(
    instance_id: str,
    class_label: str,
    baseline_name: str,
    ref_image: np.ndarray,
    ours_image: np.ndarray,
    baseline_image: np.ndarray,
    rng: np.random.Generator,
) -> JudgeTask:
    """Draw the B/C assignment from rng and freeze it into the task.

    One draw per task, in call order, so a seeded generator reproduces a
    full run's assignments.
    """
    slot = REPLY_B if rng.integers(0, 2) == 0 else REPLY_C
    return JudgeTask(
        instance_id=instance_id,
        class_label=class_label,
        baseline_name=baseline_name,
        ref_image=ref_image,
        ours_image=ours_image,
        baseline_image=baseline_image,
        ours_slot=slot,
    )


@dataclass(frozen=True)
class PreferenceRecord:
    instance_id: str
    class_label: str
    baseline_name: str
    ours_slot: str
    judge_reply: str

    @property
    def resolved_winner(self) -> str:
        if self.judge_reply == REPLY_ERROR:
            return WINNER_INVALID
        return WINNER_OURS if self.judge_reply == self.ours_slot else WINNER_BASELINE

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "class_label": self.class_label,
            "baseline_name": self.baseline_name,
            "ours_slot": self.ours_slot,
            "judge_reply": self.judge_reply,
            "resolved_winner": self.resolved_winner,
        }


def record_from_reply(task: JudgeTask, reply_text: str) -> PreferenceRecord:
    return PreferenceRecord(
        instance_id=task.instance_id,
        class_label=task.class_label,
        baseline_name=task.baseline_name,
        ours_slot=task.ours_slot,
        judge_reply=parse_judge_reply(reply_text),
    )


class HttpJudgeTransport:
    """POSTs payloads to a chat-completion endpoint with bearer auth.

    The token comes from an environment variable so it never lands in
    configs or reports. Transport-level failures and server 5xx retry up
    to MAX_RETRIES times, then surface as JudgeTransportError; anything
    judge-shaped but malformed becomes an ERROR reply instead.
    """

    def __init__(
        self,
        endpoint: str,
        token_env: str = DEFAULT_TOKEN_ENV,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        retries: int = MAX_RETRIES,
        client=None,
    ):
        self.endpoint = endpoint
        self.token_env = token_env
        self.timeout_s = timeout_s
        self.retries = retries
        self._client = client  # tests inject an httpx.Client with a mock transport

    def _post(self, payload: dict, headers: dict):
        import httpx

        if self._client is not None:
            return self._client.post(self.endpoint, json=payload, headers=headers)
        return httpx.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout_s)

    def __call__(self, payload: dict) -> str:
        import httpx

        token = os.environ.get(self.token_env)
        if not token:
            raise JudgeTransportError(
                f"environment variable {self.token_env} is not set"
            )
        headers = {"Authorization": f"Bearer {token}"}
        last_exc: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = self._post(payload, headers)
            except httpx.HTTPError as exc:
                last_exc = exc
                continue
            if resp.status_code >= 500:
                last_exc = JudgeTransportError(f"server error {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise JudgeTransportError(
                    f"judge endpoint returned {resp.status_code}: {resp.text[:200]}"
                )
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (json.JSONDecodeError, KeyError, IndexError, TypeError):
                # Reply arrived but is not judge-shaped; count the
                # comparison as invalid rather than aborting the run.
                return ""
        raise JudgeTransportError(f"judge request failed after retries: {last_exc}")


def run_judge_tasks(
    transport,
    tasks: list[JudgeTask],
    model: str = DEFAULT_MODEL,
    max_in_flight: int = 4,
) -> list[PreferenceRecord]:
    """Execute tasks with bounded concurrency, preserving task order.

    transport is any callable payload -> reply text; results come back in
    the order of `tasks` regardless of completion order.
    """
    if not tasks:
        return []
    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        replies = list(pool.map(lambda t: transport(t.payload(model)), tasks))
    return [record_from_reply(t, r) for t, r in zip(tasks, replies)]


def aggregate_preferences(records: list[PreferenceRecord]) -> dict:
    """Preference rates per (class, baseline) plus per-baseline macro average.

    Invalid records are excluded from denominators. The two percentages
    are complements by construction so they always sum to exactly 100.
    """
    by_baseline: dict[str, dict[str, dict[str, int]]] = {}
    for rec in records:
        cls = by_baseline.setdefault(rec.baseline_name, {}).setdefault(
            rec.class_label, {"valid": 0, "invalid": 0, "ours_wins": 0}
        )
        if rec.resolved_winner == WINNER_INVALID:
            cls["invalid"] += 1
        else:
            cls["valid"] += 1
            if rec.resolved_winner == WINNER_OURS:
                cls["ours_wins"] += 1

    out: dict = {}
    for baseline, classes in sorted(by_baseline.items()):
        per_class = {}
        macro_rates = []
        for cls_name, c in sorted(classes.items()):
            entry: dict = {
                "n_valid": c["valid"],
                "n_invalid": c["invalid"],
                "ours_wins": c["ours_wins"],
            }
            if c["valid"] > 0:
                ours_pct = 100.0 * c["ours_wins"] / c["valid"]
                entry["ours_pct"] = ours_pct
                entry["baseline_pct"] = 100.0 - ours_pct
                macro_rates.append(ours_pct)
            per_class[cls_name] = entry
        summary: dict = {"per_class": per_class}
        if macro_rates:
            macro = float(np.mean(macro_rates))
            summary["macro"] = {
                "ours_pct": macro,
                "baseline_pct": 100.0 - macro,
                "n_classes": len(macro_rates),
            }
        out[baseline] = summary
    return out
