"""Prompt construction, sampling from a chat-completion endpoint, and
extraction of Verilog from model responses.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum

import httpx

from rtleff import verilog
from rtleff.errors import AuthMissing, EndpointUnreachable
from rtleff.problem_store import ProblemBundle
from rtleff.types import Metric

DEFAULT_AUTH_ENV = "RTLEFF_API_KEY"
MAX_RETRIES = 8


class Formulation(str, Enum):
    P1_REWRITE_UNOPTIMIZED = "P1_RewriteUnoptimized"
    P2_FROM_SPECIFICATION = "P2_FromSpecification"

    @classmethod
    def parse(cls, value: str | Formulation) -> Formulation:
        if isinstance(value, Formulation):
            return value
        v = value.strip()
        for f in cls:
            if v in (f.value, f.name, f.value[:2]) or v.upper() == f.value[:2]:
                return f
        raise ValueError(f"unknown formulation {value!r}; expected P1 or P2")

    @property
    def short(self) -> str:
        return self.value[:2]


class ExtractionStatus(str, Enum):
    OK = "Ok"
    NO_MODULE_FOUND = "NoModuleFound"
    MULTIPLE_MODULES_MERGED = "MultipleModulesMerged"
    REQUEST_FAILED = "RequestFailed"


@dataclass(frozen=True)
class GenerationConfig:
    endpoint_url: str = "mock://references"
    model_name: str = "mock"
    n: int = 10
    temperature: float = 0.8
    max_tokens: int = 4096
    target_metric: Metric = Metric.AREA
    request_timeout: float = 120.0
    retry_limit: int = 3
    seed: int = 0
    auth_env: str = DEFAULT_AUTH_ENV
    require_auth: bool = False
    retry_backoff: float = 1.0  # seconds, doubled per retry
    workers: int = 4

    def __post_init__(self) -> None:
        object.__setattr__(self, "target_metric", Metric.parse(self.target_metric))
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0 <= self.retry_limit <= MAX_RETRIES:
            raise ValueError(f"retry_limit must be in [0, {MAX_RETRIES}]")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")

    def describe(self) -> dict:
        d = asdict(self)
        d["target_metric"] = self.target_metric.value
        for volatile in ("workers", "retry_backoff", "request_timeout"):
            d.pop(volatile)
        return d


@dataclass(frozen=True)
class CandidateSample:
    problem_id: str
    formulation: Formulation
    target_metric: Metric
    sample_index: int
    raw_response: str
    extracted_src: str | None
    extraction_status: ExtractionStatus
    error: str = ""

    @property
    def usable(self) -> bool:
        return self.extracted_src is not None and self.extraction_status in (
            ExtractionStatus.OK, ExtractionStatus.MULTIPLE_MODULES_MERGED)


# ---------------------------------------------------------------- prompts

_OBJECTIVE = {
    Metric.AREA: "minimize silicon area (fewer and smaller logic cells)",
    Metric.DELAY: "minimize critical-path delay (shallower combinational logic)",
    Metric.POWER: "minimize total power (less switching activity and leakage)",
}

SYSTEM_PROMPT = (
    "You are an expert digital hardware designer. You write synthesizable Verilog "
    "that is functionally equivalent to the requested behavior."
)


def instruction(target: Metric) -> str:
    target = Metric.parse(target)
    return (
        f"Optimization objective: minimize {target.value}. "
        f"Produce an implementation that is functionally correct and aims to {_OBJECTIVE[target]}. "
        "Keep the module name, parameters and port list exactly as in the interface below. "
        "Return the complete Verilog module in a single ```verilog code block."
    )


def build_prompt(b: ProblemBundle, f: Formulation, target: Metric | str) -> str:
    """Deterministic user prompt for one problem, formulation and target metric."""
    f = Formulation.parse(f)
    target = Metric.parse(target)
    header = b.module_header.strip()
    parts = [instruction(target), ""]
    if f is Formulation.P1_REWRITE_UNOPTIMIZED:
        parts += [
            "Rewrite the following unoptimized Verilog into an optimized version.",
            "",
            "Unoptimized implementation:",
            "```verilog",
            b.unoptimized_src.rstrip(),
            "```",
        ]
    else:
        parts += [
            "Implement the following specification.",
            "",
            "Specification:",
            b.prompt.strip(),
        ]
    parts += ["", "Interface:", "```verilog", header, "```", ""]
    return "\n".join(parts)


def build_messages(b: ProblemBundle, f: Formulation, target: Metric | str) -> list[dict]:
    return [
        {"role": "system", "content": SYSTEM_PROMPT},
        {"role": "user", "content": build_prompt(b, f, target)},
    ]


# ---------------------------------------------------------------- extraction

_FENCE_RE = re.compile(r"```[ \t]*([A-Za-z0-9_+-]*)[^\n]*\n(.*?)```", re.S)


def _fenced_blocks(raw: str) -> list[str]:
    return [m.group(2) for m in _FENCE_RE.finditer(raw)]


def extract_verilog(raw: str, header: str) -> tuple[str, ExtractionStatus]:
    """Pull the candidate design out of a model response.

    The first fenced block containing a complete module wins; without one the
    whole response is searched. A lone module is returned as is. When several
    modules are present all are kept and the one whose port names match the
    header (last on ties) is the top. The top is renamed to the header's
    module name.
    """
    text = None
    for block in _fenced_blocks(raw):
        if verilog.find_modules(block):
            text = block
            break
    if text is None:
        text = raw
    spans = verilog.find_modules(text)
    if not spans:
        return "", ExtractionStatus.NO_MODULE_FOUND
    names = verilog.declared_names(header)
    canonical = names[0] if names else None
    ports = verilog.header_ports(header) if names else []
    if len(spans) == 1:
        src = spans[0].text(text).strip() + "\n"
        if canonical:
            src = verilog.rename_module(src, canonical)
        return src, ExtractionStatus.OK
    joined = "\n\n".join(s.text(text).strip() for s in spans) + "\n"
    top = verilog.pick_top(joined, ports)
    if canonical and top != canonical:
        if canonical in verilog.module_names(joined):
            # A helper already uses the canonical name; leave the text alone.
            pass
        else:
            joined = verilog.rename_module(joined, canonical, top)
    return joined, ExtractionStatus.MULTIPLE_MODULES_MERGED


# ---------------------------------------------------------------- endpoint


@dataclass(frozen=True)
class RawResponse:
    content: str
    ok: bool
    http_status: int | None = None
    error: str = ""
    attempts: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> RawResponse:
        return cls(**d)


def _auth_headers(cfg: GenerationConfig) -> dict[str, str]:
    token = os.environ.get(cfg.auth_env, "") if cfg.auth_env else ""
    if not token:
        if cfg.require_auth:
            raise AuthMissing(f"environment variable {cfg.auth_env} is not set")
        return {}
    return {"Authorization": f"Bearer {token}"}


def request_body(b: ProblemBundle, f: Formulation, cfg: GenerationConfig, j: int) -> dict:
    return {
        "model": cfg.model_name,
        "messages": build_messages(b, f, cfg.target_metric),
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
        "seed": cfg.seed + j,
    }


def _content_of(data: dict) -> str:
    choice = data["choices"][0]
    msg = choice.get("message") or {}
    content = msg.get("content")
    if content is None:
        content = choice.get("text", "")
    return content if isinstance(content, str) else json.dumps(content)


def request_sample(client: httpx.Client, b: ProblemBundle, f: Formulation,
                   cfg: GenerationConfig, j: int) -> RawResponse:
    """One completion with retries.

    Transport failures on every attempt raise ``EndpointUnreachable``. HTTP
    errors that persist are returned as a failed response so the sample
    still counts toward n.
    """
    body = request_body(b, f, cfg, j)
    headers = _auth_headers(cfg)
    last = RawResponse("", False, error="no attempt made")
    transport_failures = 0
    attempts = cfg.retry_limit + 1
    for attempt in range(attempts):
        if attempt and cfg.retry_backoff:
            time.sleep(cfg.retry_backoff * 2 ** (attempt - 1))
        try:
            resp = client.post(cfg.endpoint_url, json=body, headers=headers, timeout=cfg.request_timeout)
        except httpx.TransportError as e:
            transport_failures += 1
            last = RawResponse("", False, error=f"{type(e).__name__}: {e}", attempts=attempt + 1)
            continue
        if resp.status_code in (401, 403):
            raise AuthMissing(f"endpoint rejected credentials (HTTP {resp.status_code})")
        if resp.status_code >= 400:
            last = RawResponse(resp.text, False, resp.status_code, f"HTTP {resp.status_code}", attempt + 1)
            if resp.status_code in (408, 409, 429) or resp.status_code >= 500:
                continue
            return last
        try:
            content = _content_of(resp.json())
        except (ValueError, KeyError, IndexError, TypeError) as e:
            last = RawResponse(resp.text, False, resp.status_code, f"malformed response: {e}", attempt + 1)
            continue
        return RawResponse(content, True, resp.status_code, attempts=attempt + 1)
    if transport_failures == attempts:
        raise EndpointUnreachable(f"{cfg.endpoint_url}: {last.error}")
    return last


def make_sample(b: ProblemBundle, f: Formulation, cfg: GenerationConfig, j: int,
                raw: RawResponse) -> CandidateSample:
    if not raw.ok:
        return CandidateSample(b.id, f, cfg.target_metric, j, raw.content, None,
                               ExtractionStatus.REQUEST_FAILED, raw.error)
    src, status = extract_verilog(raw.content, b.module_header)
    return CandidateSample(b.id, f, cfg.target_metric, j, raw.content,
                           src if status is not ExtractionStatus.NO_MODULE_FOUND else None, status)


def make_client(cfg: GenerationConfig, bundles: Sequence[ProblemBundle] = ()) -> httpx.Client:
    """HTTP client for the endpoint; ``mock://<behavior>`` URLs get a scripted model."""
    if cfg.endpoint_url.startswith("mock://"):
        behavior = cfg.endpoint_url[len("mock://"):] or "references"
        return httpx.Client(transport=httpx.MockTransport(MockModel(list(bundles), behavior)))
    return httpx.Client()


def generate_samples(b: ProblemBundle, cfg: GenerationConfig, f: Formulation, *,
                     client: httpx.Client | None = None,
                     on_response: Callable[[int, RawResponse], None] | None = None) -> list[CandidateSample]:
    """Draw exactly ``cfg.n`` samples. ``on_response`` sees each raw reply before extraction."""
    f = Formulation.parse(f)
    own = client is None
    client = client or make_client(cfg, [b])
    try:
        def one(j: int) -> CandidateSample:
            raw = request_sample(client, b, f, cfg, j)
            if on_response is not None:
                on_response(j, raw)
            return make_sample(b, f, cfg, j, raw)

        with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as ex:
            samples = list(ex.map(one, range(cfg.n)))
    finally:
        if own:
            client.close()
    return samples


# ---------------------------------------------------------------- mock model

_TARGET_RE = re.compile(r"Optimization objective: minimize (\w+)")
MOCK_BEHAVIORS = ("references", "baseline", "mixed", "prose", "error")


@dataclass
class MockModel:
    """Scripted chat-completion endpoint for tests and dry runs.

    ``references`` answers with the bundle's reference for the requested
    metric, ``baseline`` with the unoptimized source, ``prose`` with no code,
    ``error`` with HTTP 500, and ``mixed`` picks one of several outcomes from
    a hash of (prompt, seed).
    """

    bundles: list[ProblemBundle]
    behavior: str = "references"
    calls: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        if self.behavior not in MOCK_BEHAVIORS:
            raise ValueError(f"unknown mock behavior {self.behavior!r}; choose from {MOCK_BEHAVIORS}")

    def _bundle_for(self, prompt: str) -> ProblemBundle | None:
        for b in self.bundles:
            if b.module_header.strip() in prompt:
                return b
        return None

    @staticmethod
    def _reply(content: str) -> httpx.Response:
        return httpx.Response(200, json={"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]})

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.calls += 1
        body = json.loads(request.content)
        prompt = body["messages"][-1]["content"]
        b = self._bundle_for(prompt)
        m = _TARGET_RE.search(prompt)
        if b is None or m is None:
            return httpx.Response(400, json={"error": "unknown problem"})
        target = Metric.parse(m.group(1))
        behavior = self.behavior
        if behavior == "mixed":
            h = hashlib.sha256(f"{prompt}|{body.get('seed', 0)}".encode()).digest()[0]
            behavior = ("references", "references", "references", "baseline", "other",
                        "broken", "prose", "error")[h % 8]
        if behavior == "error":
            return httpx.Response(500, json={"error": "injected failure"})
        if behavior == "prose":
            return self._reply("I would restructure the logic to share terms, but I cannot show code here.")
        if behavior == "baseline":
            src = b.unoptimized_src
        elif behavior == "other":
            others = [x for x in (Metric.AREA, Metric.DELAY, Metric.POWER) if x is not target]
            src = b.references.source(others[0])
        elif behavior == "broken":
            src = b.references.source(target)
            cut = src.index(";") + 1
            src = src[:cut] + "\n  wire broken_sig = (1'b1;" + src[cut:]
        else:
            src = b.references.source(target)
        return self._reply(f"Here is the design.\n\n```verilog\n{src.rstrip()}\n```\n")
