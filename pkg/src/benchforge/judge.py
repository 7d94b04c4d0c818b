"""LLM-as-a-judge scoring: prompt construction, scorecard parsing, and the
weighted score combination with thresholding.

The combined score divides the weighted sum by the criterion count even
though the weights already sum to one, so with five criteria the reachable
range is [0.2, 1.0]; the default threshold 0.8 corresponds to an average
criterion score of 4 out of 5 under equal weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

from .backends import ChatBackend, ChatRequest
from .core import DEFAULT_CRITERIA, TokenUsage, WEIGHT_SUM_TOL
from .prompts import load_template, render

# Parse failures re-issue the identical prompt this many times before the
# unit fails closed.
JUDGE_PARSE_RETRIES = 3

_RUBRIC_LINES = {
    "grammar": "correct morphology, agreement, and sentence structure in the translation (1 = pervasive errors, 5 = flawless)",
    "ner": "named entities such as people, places, organizations, and products are preserved or consistently transliterated (1 = lost or mangled, 5 = all preserved)",
    "special": "numbers, links, code snippets, and special characters survive unchanged (1 = corrupted, 5 = intact)",
    "fluency": "the translation reads naturally to a native speaker (1 = unreadable, 5 = fully natural)",
    "meaning": "the translation conveys the complete meaning of the source without additions or omissions (1 = different meaning, 5 = equivalent)",
}


class ScorecardParseError(ValueError):
    """The judge reply held no valid scorecard block."""


@dataclass(frozen=True)
class JudgeScorecard:
    scores: Mapping[str, int]
    explanation: str
    raw_response: str


@dataclass(frozen=True)
class JudgeDecision:
    combined: float
    threshold: float
    passed: bool


def build_judge_prompt(
    source_text: str,
    translated_text: str,
    criteria: Sequence[str] = DEFAULT_CRITERIA,
    prompt_dir: str | None = None,
) -> str:
    """Render the judge prompt: per-criterion rubric, step-by-step analysis
    instruction, and the machine-readable score line, byte-stable given
    identical inputs."""
    if not source_text or not translated_text:
        raise ValueError("source and translated text must be non-empty")
    rubric = "\n".join(
        f"- {name}: {_RUBRIC_LINES.get(name, 'quality on this criterion (1 = worst, 5 = best)')}"
        for name in criteria
    )
    schema = "{" + ", ".join(f'"{name}": n' for name in criteria) + "} where each n is an integer from 1 to 5"
    return render(
        load_template("judge", prompt_dir),
        rubric=rubric,
        score_schema=schema,
        source_text=source_text,
        translated_text=translated_text,
    )


def _json_objects(text: str) -> list[tuple[int, dict]]:
    """All parseable JSON objects in text, with their start offsets."""
    decoder = json.JSONDecoder()
    found = []
    pos = 0
    while True:
        start = text.find("{", pos)
        if start < 0:
            break
        try:
            obj, end = decoder.raw_decode(text[start:])
        except json.JSONDecodeError:
            pos = start + 1
            continue
        if isinstance(obj, dict):
            found.append((start, obj))
        pos = start + max(end, 1)
    return found


def parse_scorecard(llm_output: str, criteria: Sequence[str] = DEFAULT_CRITERIA) -> JudgeScorecard:
    """Extract the last JSON object matching the criterion-key shape.

    Scores must be integers in 1..5; anything else (including a missing
    block) is a parse error for the caller to retry on.
    """
    wanted = set(criteria)
    best = None
    for start, obj in _json_objects(llm_output):
        if set(obj) != wanted:
            continue
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in obj.values()):
            continue
        best = (start, obj)
    if best is None:
        raise ScorecardParseError("no JSON block with the expected criterion keys")
    start, scores = best
    bad = {k: v for k, v in scores.items() if not 1 <= v <= 5}
    if bad:
        raise ScorecardParseError(f"scores outside 1..5: {bad}")
    return JudgeScorecard(
        scores=dict(scores),
        explanation=llm_output[:start].strip(),
        raw_response=llm_output,
    )


def combine_score(card: JudgeScorecard, weights: Mapping[str, float]) -> float:
    """Weighted criterion combination: sum(weight_i * score_i) / criterion count."""
    if set(card.scores) != set(weights):
        raise ValueError(
            f"criterion mismatch: scorecard has {sorted(card.scores)}, weights have {sorted(weights)}"
        )
    if abs(sum(weights.values()) - 1.0) > WEIGHT_SUM_TOL or any(w < 0 for w in weights.values()):
        raise ValueError("weights must be non-negative and sum to 1")
    return sum(weights[c] * card.scores[c] for c in weights) / len(weights)


def decide(combined: float, threshold: float) -> JudgeDecision:
    """Inclusive comparison: a combined score equal to the threshold passes."""
    return JudgeDecision(combined=combined, threshold=threshold, passed=combined >= threshold)


@dataclass(frozen=True)
class JudgeOutcome:
    """Result of judging one unit, including the failure mode if any."""

    decision: JudgeDecision | None
    card: JudgeScorecard | None
    usage: TokenUsage
    error: str | None = None


def judge_translation(
    backend: ChatBackend,
    source_text: str,
    translated_text: str,
    weights: Mapping[str, float],
    threshold: float,
    model: str = "judge-default",
    temperature: float = 0.0,
    max_tokens: int = 4096,
    prompt_dir: str | None = None,
) -> JudgeOutcome:
    """Run the full judge round trip for one translation.

    Retries the identical prompt on parse failures (deterministic backends
    will fail identically; sampling backends may recover), then fails closed
    with reason ``unparseable_judgment``.
    """
    prompt = build_judge_prompt(source_text, translated_text, tuple(weights), prompt_dir)
    req = ChatRequest(
        model=model,
        messages=(("user", prompt),),
        temperature=temperature,
        max_tokens=max_tokens,
    )
    usage = TokenUsage()
    last_error = "unparseable_judgment"
    for _ in range(JUDGE_PARSE_RETRIES):
        reply, call_usage = backend.chat(req)
        usage = usage + call_usage
        try:
            card = parse_scorecard(reply, tuple(weights))
        except ScorecardParseError:
            continue
        combined = combine_score(card, weights)
        return JudgeOutcome(decision=decide(combined, threshold), card=card, usage=usage)
    return JudgeOutcome(decision=None, card=None, usage=usage, error=last_error)
