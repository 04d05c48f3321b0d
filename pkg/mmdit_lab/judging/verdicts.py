"""
Judge requests, verdict parsing and the append-only verdict log.

A judge backend is anything with ``ask(request: JudgeRequest) -> str``. Parsing
never raises: a reply that holds no usable JSON object is retried, and after the
last attempt becomes the ``cannot determine`` verdict with ``pass_flag = 0``.
"""
from __future__ import annotations

import io
import itertools
import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Protocol, Sequence

import numpy as np
from PIL import Image
from tqdm import tqdm

from ..conf import lab_settings
from ..exceptions import LabError, SerializationError, UnknownExperimentFamilyCombo
from ..taskgen.tasks import FamilyKind
from .prompts import CANNOT_DETERMINE, SYSTEM_PROMPT, JudgeExperiment, question_for
from .transport import ChatClient, ChatRequest, ImageAttachment

logger = logging.getLogger(__name__)

_FENCE = re.compile(r"```[a-zA-Z]*")


@dataclass(frozen=True)
class JudgeRequest:
    experiment: JudgeExperiment
    family: FamilyKind
    variant: str
    images: tuple[ImageAttachment, ...]
    question: str
    system_prompt: str = SYSTEM_PROMPT
    temperature: float = 0.0

    def chat(self) -> ChatRequest:
        return ChatRequest(self.system_prompt, self.question, self.images, self.temperature)


@dataclass(frozen=True)
class JudgeVerdict:
    pass_flag: int
    reason: str
    raw: str
    retries_used: int = 0

    @property
    def passed(self) -> bool:
        return self.pass_flag == 1


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 2

    @classmethod
    def from_settings(cls) -> "RetryPolicy":
        return cls(max(1, int(lab_settings.JUDGE_MAX_ATTEMPTS)))


def png_bytes(image) -> bytes:
    """Accept PNG bytes or an ``uint8`` ``[h, w, 3]`` array."""
    if isinstance(image, (bytes, bytearray)):
        return bytes(image)
    buffer = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(buffer, format="PNG")
    return buffer.getvalue()


def build_request(experiment: JudgeExperiment, family: FamilyKind, images: Sequence, variant: str = "") -> JudgeRequest:
    experiment = JudgeExperiment(experiment)
    if len(images) != experiment.image_count:
        raise UnknownExperimentFamilyCombo(
            f"{experiment.value} judges {experiment.image_count} images, got {len(images)}"
        )
    question = question_for(experiment, family, variant)
    attachments = tuple(ImageAttachment(f"Image {i}", png_bytes(image)) for i, image in enumerate(images, start=1))
    return JudgeRequest(
        experiment=experiment,
        family=FamilyKind(family),
        variant=variant,
        images=attachments,
        question=question,
        temperature=float(lab_settings.JUDGE_TEMPERATURE),
    )


# ----------------------------
# Parsing
# ----------------------------

def _candidates(text: str) -> Iterable[Any]:
    stripped = _FENCE.sub("", text).strip()
    try:
        yield json.loads(stripped)
    except (ValueError, RecursionError):
        pass
    decoder = json.JSONDecoder()
    for match in re.finditer(r"\{", stripped):
        try:
            obj, _ = decoder.raw_decode(stripped, match.start())
        except (ValueError, RecursionError):
            continue
        yield obj


def _pass_value(value: Any) -> int | None:
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, int) and value in (0, 1):
        return value
    if isinstance(value, float) and value in (0.0, 1.0):
        return int(value)
    if isinstance(value, str) and value.strip() in ("0", "1"):
        return int(value.strip())
    return None


def parse_verdict(reply: str | bytes | None) -> JudgeVerdict | None:
    """First JSON object in ``reply`` carrying a 0/1 ``pass``; None if there is none."""
    if reply is None:
        return None
    if isinstance(reply, (bytes, bytearray)):
        reply = bytes(reply).decode("utf-8", errors="replace")
    for obj in _candidates(reply):
        if not isinstance(obj, dict) or "pass" not in obj:
            continue
        flag = _pass_value(obj["pass"])
        if flag is None:
            continue
        reason = obj.get("reason", "")
        return JudgeVerdict(flag, reason if isinstance(reason, str) else json.dumps(reason), reply)
    return None


def fallback_verdict(raw: str, retries_used: int) -> JudgeVerdict:
    return JudgeVerdict(0, CANNOT_DETERMINE, raw, retries_used)


# ----------------------------
# Backends
# ----------------------------

class JudgeBackend(Protocol):
    def ask(self, request: JudgeRequest) -> str:
        ...


class EndpointJudge:
    def __init__(self, client: ChatClient):
        self.client = client

    @classmethod
    def from_settings(cls) -> "EndpointJudge":
        return cls(ChatClient.from_settings())

    def ask(self, request: JudgeRequest) -> str:
        return self.client.complete(request.chat())


class ScriptedJudge:
    """Replays canned replies in order (cycling), or calls ``script(request)``."""

    def __init__(self, script: Sequence[str] | Callable[[JudgeRequest], str]):
        self._lock = threading.Lock()
        if callable(script):
            self._script = script
        else:
            replies = itertools.cycle(list(script))
            self._script = lambda request: next(replies)
        self.requests: list[JudgeRequest] = []

    def ask(self, request: JudgeRequest) -> str:
        with self._lock:
            self.requests.append(request)
            return self._script(request)


def judge(backend: JudgeBackend, request: JudgeRequest, retry_policy: RetryPolicy | None = None) -> JudgeVerdict:
    """Ask until a reply parses; TransportError from the backend propagates."""
    policy = retry_policy or RetryPolicy()
    raw = ""
    for attempt in range(max(1, policy.max_attempts)):
        raw = backend.ask(request)
        verdict = parse_verdict(raw)
        if verdict is not None:
            return JudgeVerdict(verdict.pass_flag, verdict.reason, verdict.raw, attempt)
        logger.warning("unparseable judge reply", extra={"attempt": attempt + 1, "raw": str(raw)[:200]})
    return fallback_verdict(raw if isinstance(raw, str) else repr(raw), max(1, policy.max_attempts) - 1)


# ----------------------------
# Verdict log
# ----------------------------

@dataclass(frozen=True)
class Cell:
    table: str
    row: str
    column: str
    # style tasks only
    arm: str = ""

    def to_dict(self) -> dict[str, str]:
        data = asdict(self)
        if not self.arm:
            del data["arm"]
        return data


@dataclass(frozen=True)
class VerdictRecord:
    task_id: str
    experiment: str
    cell: Cell
    pass_flag: int
    reason: str
    raw: str
    retries_used: int = 0

    @property
    def key(self) -> tuple:
        return (self.task_id, self.cell.table, self.cell.row, self.cell.column)

    def to_json(self) -> str:
        return json.dumps({
            "task_id": self.task_id,
            "experiment": self.experiment,
            "cell": self.cell.to_dict(),
            "pass": self.pass_flag,
            "reason": self.reason,
            "raw": self.raw,
            "retries_used": self.retries_used,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "VerdictRecord":
        data = json.loads(line)
        return cls(
            task_id=data["task_id"],
            experiment=data["experiment"],
            cell=Cell(**data["cell"]),
            pass_flag=int(data["pass"]),
            reason=data.get("reason", ""),
            raw=data.get("raw", ""),
            retries_used=int(data.get("retries_used", 0)),
        )


def read_verdict_log(path: Path | str) -> list[VerdictRecord]:
    path = Path(path)
    if not path.exists():
        return []
    records = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(VerdictRecord.from_json(line))
        except (ValueError, KeyError, TypeError) as exc:
            raise SerializationError(f"{path}:{number}: bad verdict line") from exc
    return records


def append_verdicts(path: Path | str, records: Iterable[VerdictRecord]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("a", encoding="utf-8") as fh:
        for record in records:
            fh.write(record.to_json() + "\n")
            count += 1
    return count


@dataclass
class JudgeJob:
    task_id: str
    cell: Cell
    request: JudgeRequest

    @property
    def key(self) -> tuple:
        return (self.task_id, self.cell.table, self.cell.row, self.cell.column)


@dataclass
class JudgeBatch:
    records: list[VerdictRecord] = field(default_factory=list)
    # keyed like VerdictRecord.key
    failures: dict[tuple, str] = field(default_factory=dict)
    skipped: int = 0


def judge_many(
    backend: JudgeBackend,
    jobs: Sequence[JudgeJob],
    log_path: Path | str,
    *,
    retry_policy: RetryPolicy | None = None,
    concurrency: int | None = None,
    progress: bool = False,
) -> JudgeBatch:
    """
    Judge every job not already in the log and append the new verdicts.

    Records are appended in job order regardless of completion order so the log
    is reproducible. A job whose transport fails is counted in ``failures`` and
    left out of the log, so a rerun retries it.
    """
    done = {record.key for record in read_verdict_log(log_path)}
    batch = JudgeBatch()
    pending = []
    for job in jobs:
        if job.key in done:
            batch.skipped += 1
        else:
            pending.append(job)
    workers = max(1, int(concurrency or lab_settings.JUDGE_CONCURRENCY))
    results: dict[int, VerdictRecord] = {}
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(judge, backend, job.request, retry_policy): i for i, job in enumerate(pending)}
        for future in tqdm(as_completed(futures), total=len(futures), disable=not progress, desc="judge"):
            i = futures[future]
            job = pending[i]
            try:
                verdict = future.result()
            except LabError as exc:
                batch.failures[job.key] = str(exc)
                logger.error("judge call failed", extra={"task_id": job.task_id, "cell": job.cell.to_dict(),
                                                         "error": str(exc)})
                continue
            results[i] = VerdictRecord(
                task_id=job.task_id,
                experiment=job.request.experiment.value,
                cell=job.cell,
                pass_flag=verdict.pass_flag,
                reason=verdict.reason,
                raw=verdict.raw,
                retries_used=verdict.retries_used,
            )
    batch.records = [results[i] for i in sorted(results)]
    append_verdicts(log_path, batch.records)
    logger.info(
        "judged batch",
        extra={"judged": len(batch.records), "skipped": batch.skipped, "failed": len(batch.failures)},
    )
    return batch
