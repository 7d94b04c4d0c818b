"""Chat-completion and embedding clients for OpenAI-compatible servers,
plus fully deterministic mock backends for offline runs and tests.

Real clients speak the ``/v1/chat/completions`` and ``/v1/embeddings`` wire
shapes; endpoint URLs and the API key come from the environment
(``BENCHFORGE_CHAT_URL``, ``BENCHFORGE_EMBED_URL``, ``BENCHFORGE_API_KEY``).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

import httpx
import numpy as np

from .core import TokenUsage

ENV_API_KEY = "BENCHFORGE_API_KEY"
ENV_CHAT_URL = "BENCHFORGE_CHAT_URL"
ENV_EMBED_URL = "BENCHFORGE_EMBED_URL"

CHAT_PATH = "/v1/chat/completions"
EMBED_PATH = "/v1/embeddings"


class BackendError(Exception):
    """Base class for backend failures."""


class BackendRequestError(BackendError):
    """The server rejected the request (HTTP 4xx); retrying cannot help."""

    def __init__(self, status_code: int, detail: str):
        super().__init__(f"HTTP {status_code}: {detail}")
        self.status_code = status_code


class BackendUnavailableError(BackendError):
    """Transport failure or 5xx that persisted through all retry attempts."""


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[tuple[str, str], ...]  # (role, content) pairs
    temperature: float = 0.0
    max_tokens: int = 4096

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def user_text(self) -> str:
        """Content of the last user message (mocks key their behavior on it)."""
        for role, content in reversed(self.messages):
            if role == "user":
                return content
        return self.messages[-1][1]


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    model: str

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


def count_tokens(text: str) -> int:
    """Rough token estimate: ceil(utf-8 bytes / 4).

    Only used for cost accounting when the API response omits usage; no
    tokenizer parity intended.
    """
    return math.ceil(len(text.encode("utf-8")) / 4)


class ChatBackend(Protocol):
    def chat(self, req: ChatRequest) -> tuple[str, TokenUsage]: ...


class EmbeddingBackend(Protocol):
    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


def build_chat_body(req: ChatRequest) -> bytes:
    """Canonical request body; byte-stable for identical requests."""
    payload = {
        "model": req.model,
        "messages": [{"role": r, "content": c} for r, c in req.messages],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def build_embed_body(model: str, texts: Sequence[str]) -> bytes:
    payload = {"model": model, "input": list(texts)}
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


@dataclass
class RetryPolicy:
    attempts: int = 5
    base_delay: float = 1.0
    factor: float = 2.0
    jitter: float = 0.1


class _HttpClient:
    """Shared retry/transport plumbing for the two real clients."""

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        timeout: float = 60.0,
        retry: RetryPolicy | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.retry = retry or RetryPolicy()
        self._sleep = sleep
        self._rng = random.Random()
        self._client = httpx.Client(timeout=timeout, transport=transport)
        self.last_attempts = 0

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def post_json(self, path: str, body: bytes) -> dict:
        url = self.base_url + path
        delay = self.retry.base_delay
        last_error: Exception | None = None
        for attempt in range(1, self.retry.attempts + 1):
            self.last_attempts = attempt
            try:
                resp = self._client.post(url, content=body, headers=self._headers())
            except httpx.HTTPError as exc:
                last_error = exc
            else:
                if resp.status_code < 400:
                    return resp.json()
                excerpt = resp.text[:500]
                if resp.status_code < 500:
                    raise BackendRequestError(resp.status_code, excerpt)
                last_error = BackendUnavailableError(f"HTTP {resp.status_code}: {excerpt}")
            if attempt < self.retry.attempts:
                self._sleep(delay + self._rng.uniform(0, delay * self.retry.jitter))
                delay *= self.retry.factor
        raise BackendUnavailableError(
            f"{url} failed after {self.retry.attempts} attempts: {last_error}"
        )

    def close(self) -> None:
        self._client.close()


class OpenAIChatClient(_HttpClient):
    """Chat client for any server exposing the OpenAI chat-completions shape."""

    def chat(self, req: ChatRequest) -> tuple[str, TokenUsage]:
        data = self.post_json(CHAT_PATH, build_chat_body(req))
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailableError(f"malformed chat response: {exc}") from exc
        usage = data.get("usage") or {}
        if "prompt_tokens" in usage or "completion_tokens" in usage:
            tokens = TokenUsage(int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)))
        else:
            tokens = TokenUsage(
                sum(count_tokens(c) for _, c in req.messages), count_tokens(text)
            )
        return text, tokens


class OpenAIEmbeddingClient(_HttpClient):
    """Embedding client for the OpenAI embeddings shape."""

    def __init__(self, base_url: str, model: str, **kwargs):
        super().__init__(base_url, **kwargs)
        self.model = model

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            return []
        data = self.post_json(EMBED_PATH, build_embed_body(self.model, texts))
        rows = data.get("data") or []
        if len(rows) != len(texts):
            raise BackendUnavailableError(
                f"embedding response has {len(rows)} rows for {len(texts)} inputs"
            )
        # Match by index, never by arrival order.
        rows = sorted(rows, key=lambda r: r.get("index", 0))
        return [EmbeddingVector(tuple(float(x) for x in r["embedding"]), self.model) for r in rows]


def bounded_map(fn: Callable, items: Sequence, max_in_flight: int) -> list:
    """Apply fn to items with at most max_in_flight concurrent calls.

    Results come back in input order regardless of completion order, so the
    caller's reductions stay deterministic.
    """
    items = list(items)
    if max_in_flight <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Deterministic mocks
# ---------------------------------------------------------------------------

# Vietnamese alphabet letters outside ASCII. The tone-marked plain vowels
# overlap a few Romance languages, which is fine for a test heuristic.
_VIETNAMESE_CHARS = set(
    "ăâđơưẠạẢảẤấẦầẨẩẪẫẬậẮắẰằẲẳẴẵẶặẸẹẺẻẼẽẾếỀềỂểỄễỆệỈỉỊị"
    "ỌọỎỏỐốỒồỔổỖỗỘộỚớỜờỞởỠỡỢợỤụỦủỨứỪừỬửỮữỰựỲỳỴỵỶỷỸỹĂÂĐƠƯ"
    "àáảãạèéẻẽẹìíỉĩịòóỏõọùúủũụỳýỷỹỵÀÁÈÉÌÍÒÓÙÚỲÝ"
)

# Appended by the corrupt translation mode; Hangul so the script heuristic
# flags the output as non-Vietnamese.
CORRUPT_SUFFIX = " 손상된"


def script_guess(text: str) -> str:
    """Tiny script-frequency heuristic used by the mock detector and the
    character-model comparison detector. Deliberately fooled by injected
    foreign characters, like the character models it stands in for."""
    if any("가" <= ch <= "힣" for ch in text):
        return "kor_Hang"
    if any("Ѐ" <= ch <= "ӿ" for ch in text):
        return "rus_Cyrl"
    if any(ch in _VIETNAMESE_CHARS for ch in text):
        return "vie_Latn"
    if any(ch.isalpha() for ch in text):
        return "eng_Latn"
    return "und_Zzzz"


def mock_translate(
    text: str,
    mode: str = "identity",
    table: dict[str, str] | None = None,
    prefix: str = "VI:",
) -> str:
    """Deterministic stand-in translation.

    Modes: identity (unchanged), marker (prefix), table (lookup with identity
    fallback), corrupt (inject foreign characters).
    """
    if mode == "identity":
        return text
    if mode == "marker":
        return prefix + text
    if mode == "table":
        return (table or {}).get(text, text)
    if mode == "corrupt":
        return text + CORRUPT_SUFFIX
    raise ValueError(f"unknown mock translation mode: {mode}")


class MockTranslatorChat:
    """Chat backend that answers translation prompts via mock_translate.

    Texts listed in fail_texts raise BackendUnavailableError, simulating a
    unit whose retries were exhausted.
    """

    def __init__(
        self,
        mode: str = "identity",
        table: dict[str, str] | None = None,
        prefix: str = "VI:",
        fail_texts: Iterable[str] = (),
        model: str = "mock-translator",
    ):
        self.mode = mode
        self.table = dict(table or {})
        self.prefix = prefix
        self.fail_texts = set(fail_texts)
        self.model = model
        self.calls = 0

    def chat(self, req: ChatRequest) -> tuple[str, TokenUsage]:
        self.calls += 1
        text = req.user_text()
        if text in self.fail_texts:
            raise BackendUnavailableError(f"mock hard failure for {text[:40]!r}")
        out = mock_translate(text, self.mode, self.table, self.prefix)
        usage = TokenUsage(sum(count_tokens(c) for _, c in req.messages), count_tokens(out))
        return out, usage


class MockDetectorChat:
    """Chat backend that answers language-detection prompts.

    The reply mimics a chain-of-thought detection response ending in a
    ``LANG: <code>`` line. A per-text table overrides the script heuristic;
    raw_table substitutes an entire reply verbatim (for parse-failure tests).
    """

    def __init__(
        self,
        table: dict[str, str] | None = None,
        raw_table: dict[str, str] | None = None,
        model: str = "mock-detector",
    ):
        self.table = dict(table or {})
        self.raw_table = dict(raw_table or {})
        self.model = model
        self.calls = 0

    def chat(self, req: ChatRequest) -> tuple[str, TokenUsage]:
        self.calls += 1
        text = req.user_text()
        if text in self.raw_table:
            out = self.raw_table[text]
        else:
            label = self.table.get(text) or script_guess(text)
            out = f"Scanning scripts and vocabulary of the sample.\nLANG: {label}"
        usage = TokenUsage(sum(count_tokens(c) for _, c in req.messages), count_tokens(out))
        return out, usage


class MockJudgeChat:
    """Chat backend that answers judge prompts with a canned scorecard.

    overrides maps a substring of the judge prompt (typically the translated
    text) to a criterion->score dict; the first match wins. raw_overrides
    substitutes the whole reply, for parser-failure tests. Every prompt seen
    is kept in call_log so tests can assert the judge was never consulted.
    """

    def __init__(
        self,
        default_scores: dict[str, int] | None = None,
        overrides: Sequence[tuple[str, dict[str, int]]] = (),
        raw_overrides: Sequence[tuple[str, str]] = (),
        model: str = "mock-judge",
    ):
        self.default_scores = default_scores
        self.overrides = list(overrides)
        self.raw_overrides = list(raw_overrides)
        self.model = model
        self.call_log: list[str] = []

    def chat(self, req: ChatRequest) -> tuple[str, TokenUsage]:
        prompt = req.user_text()
        self.call_log.append(prompt)
        for key, raw in self.raw_overrides:
            if key in prompt:
                usage = TokenUsage(count_tokens(prompt), count_tokens(raw))
                return raw, usage
        scores = self.default_scores or {c: 5 for c in ("grammar", "ner", "special", "fluency", "meaning")}
        for key, override in self.overrides:
            if key in prompt:
                scores = override
                break
        out = "The translation was compared against the source criterion by criterion.\n" + json.dumps(
            scores, sort_keys=True
        )
        usage = TokenUsage(count_tokens(prompt), count_tokens(out))
        return out, usage


def _seeded_unit_vector(text: str, dim: int, seed: int) -> tuple[float, ...]:
    if text == "":
        # Defined boundary behavior: a fixed basis vector.
        vec = np.zeros(dim)
        vec[0] = 1.0
        return tuple(vec)
    digest = hashlib.sha256(f"{seed}\x1f{text}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
    vec = rng.standard_normal(dim)
    vec /= np.linalg.norm(vec)
    return tuple(float(x) for x in vec)


# Integer-lattice vector pairs whose cosine is exact at float precision
# (norms are exactly 5.0, dot products are small integers). Needed for
# threshold-boundary tests where "0.80 passes at 0.8" must not drift by an
# ulp. Keys are dot/25.
_EXACT_PAIRS = {
    1.0: ((3.0, 4.0), (3.0, 4.0)),
    0.96: ((3.0, 4.0), (4.0, 3.0)),
    0.8: ((3.0, 4.0), (0.0, 5.0)),
    0.6: ((3.0, 4.0), (5.0, 0.0)),
    0.28: ((3.0, 4.0), (-3.0, 4.0)),
    0.0: ((3.0, 4.0), (-4.0, 3.0)),
    -0.28: ((3.0, 4.0), (3.0, -4.0)),
    -0.6: ((3.0, 4.0), (-5.0, 0.0)),
    -0.8: ((3.0, 4.0), (0.0, -5.0)),
    -0.96: ((3.0, 4.0), (-4.0, -3.0)),
    -1.0: ((3.0, 4.0), (-3.0, -4.0)),
}


def vectors_for_cosine(cosine: float, dim: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Two dim-length vectors with the requested cosine similarity.

    For the lattice values (0.8 among them) the cosine is exact; otherwise
    it is within one ulp of the request.
    """
    if cosine in _EXACT_PAIRS:
        a2, b2 = _EXACT_PAIRS[cosine]
    else:
        a2 = (1.0, 0.0)
        b2 = (float(cosine), math.sqrt(max(0.0, 1.0 - cosine * cosine)))
    pad = (0.0,) * (dim - 2)
    return a2 + pad, b2 + pad


class MockEmbeddingBackend:
    """Seeded hash -> unit-norm vector, with an override table so tests can
    force any cosine value between chosen texts."""

    def __init__(self, dim: int = 16, seed: int = 42, model: str = "mock-embedder"):
        if dim < 2:
            raise ValueError("mock embedder needs dim >= 2")
        self.dim = dim
        self.seed = seed
        self.model = model
        self.overrides: dict[str, tuple[float, ...]] = {}

    def force_vector(self, text: str, values: Sequence[float]) -> None:
        if len(values) != self.dim:
            raise ValueError(f"override vector must have dim {self.dim}")
        self.overrides[text] = tuple(float(x) for x in values)

    def force_pair(self, text_a: str, text_b: str, cosine: float) -> None:
        """Pin the two texts' vectors so cosine(a, b) equals the given value."""
        vec_a, vec_b = vectors_for_cosine(cosine, self.dim)
        self.overrides[text_a] = vec_a
        self.overrides[text_b] = vec_b

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        out = []
        for text in texts:
            values = self.overrides.get(text) or _seeded_unit_vector(text, self.dim, self.seed)
            out.append(EmbeddingVector(values, self.model))
        return out


@dataclass
class BackendSuite:
    """The four backend roles a pipeline run needs."""

    detector: ChatBackend
    translator: ChatBackend
    judge: ChatBackend
    embedder: EmbeddingBackend

    @staticmethod
    def mock(
        seed: int = 42,
        dim: int = 16,
        translate_mode: str = "identity",
        translate_table: dict[str, str] | None = None,
        detect_table: dict[str, str] | None = None,
    ) -> "BackendSuite":
        return BackendSuite(
            detector=MockDetectorChat(table=detect_table),
            translator=MockTranslatorChat(mode=translate_mode, table=translate_table),
            judge=MockJudgeChat(),
            embedder=MockEmbeddingBackend(dim=dim, seed=seed),
        )

    @staticmethod
    def from_env(cfg) -> "BackendSuite":
        """Build real clients from config plus environment endpoints."""
        api_key = os.environ.get(ENV_API_KEY, "")
        chat_url = os.environ.get(ENV_CHAT_URL, "")
        embed_url = os.environ.get(ENV_EMBED_URL, "")
        if not chat_url or not embed_url:
            raise BackendRequestError(
                401, f"{ENV_CHAT_URL} and {ENV_EMBED_URL} must be set for backend=openai"
            )
        chat = OpenAIChatClient(chat_url, api_key=api_key)
        return BackendSuite(
            detector=chat,
            translator=chat,
            judge=chat,
            embedder=OpenAIEmbeddingClient(embed_url, model=cfg.embed_model, api_key=api_key),
        )


def suite_for_config(cfg, seed: int | None = None) -> BackendSuite:
    if cfg.backend == "mock":
        return BackendSuite.mock(seed=cfg.seed if seed is None else seed)
    return BackendSuite.from_env(cfg)
