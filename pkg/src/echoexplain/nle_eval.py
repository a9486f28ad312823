"""Scoring explanation texts: attribute extraction, verdicts, aggregation, readability."""
from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import (
    EmptyInput,
    EmptyText,
    InputError,
    MalformedRow,
    NoFinalAnswer,
    RegistryMismatch,
    UnknownOption,
)
from .narrative import STATUSES, AttributeRegistry, AttributeStatusSet, StatusEntry, load_registry

VERDICTS = ("match", "contradiction", "hallucination", "missing")
UNSPECIFIED_LABEL = "not specified in the text"
# option 1 -> pathological, 2 -> unspecified, 3 -> normal
OPTION_STATUS = {1: "pathological", 2: "unspecified", 3: "normal"}

FRAMING = (
    "I have the following text that describes an image and I want you to answer some "
    "questions about it by selecting one from different options."
)
ACKNOWLEDGE = "Sure let me help you with that, what is the text and the question"
TARGET_TEMPLATE = "Great. Now do the same task for the following text: TEXT_TO_INSERT"
ANSWER_FORMAT = "And please answer in the format:\nFinal answer: [option] \n\n Explanation: text"


@dataclass(frozen=True)
class AttributeQuery:
    key: str
    question: str
    options: tuple[str, str, str]
    exemplar_text: str
    exemplar_answer: int
    exemplar_explanation: str

    def __post_init__(self):
        if len(self.options) != 3 or len({o.lower() for o in self.options}) != 3:
            raise InputError(f"{self.key}: need three distinct options, got {self.options}")
        if self.options[1] != UNSPECIFIED_LABEL:
            raise InputError(f"{self.key}: the middle option must be {UNSPECIFIED_LABEL!r}")
        if self.exemplar_answer not in (1, 2, 3):
            raise InputError(f"{self.key}: exemplar answer must be 1, 2 or 3")

    def option_list(self) -> str:
        opts = [f"[{i}/{label}]" for i, label in enumerate(self.options, 1)]
        return f"Pick ONE final answer out of: {opts[0]}, {opts[1]} or {opts[2]}."


def load_queries(path: Union[str, Path, None] = None) -> dict[str, AttributeQuery]:
    if path is None:
        raw = resources.files("echoexplain").joinpath("data/queries.json").read_text("utf-8")
    else:
        raw = Path(path).read_text("utf-8")
    out = {}
    try:
        for q in json.loads(raw)["queries"]:
            ex = q["exemplar"]
            out[q["key"]] = AttributeQuery(
                q["key"], q["question"], tuple(q["options"]), ex["text"], int(ex["answer"]), ex["explanation"]
            )
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed query document: {exc}") from exc
    return out


def build_attribute_query(query: AttributeQuery, text: str) -> list[dict]:
    """One-shot chat asking which of three options the text supports for one attribute."""
    if not text or not text.strip():
        raise EmptyText("text to judge is empty")
    answer = f"[{query.exemplar_answer}/{query.options[query.exemplar_answer - 1]}]"
    target = TARGET_TEMPLATE.replace("TEXT_TO_INSERT", text.strip())
    return [
        {"role": "user", "content": FRAMING},
        {"role": "assistant", "content": ACKNOWLEDGE},
        {"role": "user",
         "content": f"This is the text: {query.exemplar_text} {query.question} {query.option_list()}"},
        {"role": "assistant",
         "content": f"Final answer: {answer} \n\n Explanation: {query.exemplar_explanation}"},
        {"role": "user",
         "content": f"{target} {query.question} {query.option_list()} {ANSWER_FORMAT}"},
    ]


_FINAL = re.compile(r"final\s+answer\W{0,3}?\s*:\s*(.*)", re.IGNORECASE)
_INDEXED = re.compile(r"(\d+)\s*(?:[/.):-]\s*(.*))?", re.DOTALL)


def _norm(s: str) -> str:
    return " ".join(s.strip().strip("*_`'\"").lower().split())


def parse_final_answer(response: str, options: Sequence[str]) -> int:
    """1-based option index named on the first ``Final answer:`` line."""
    for line in response.splitlines():
        m = _FINAL.search(line)
        if m:
            rest = m.group(1)
            break
    else:
        raise NoFinalAnswer(f"no 'Final answer:' line in {response[:80]!r}")

    rest = rest.split("\\n")[0].strip().lstrip("*_` ")
    bracket = re.match(r"\[([^\]]*)\]", rest)
    if bracket:
        cand = bracket.group(1)
    else:
        cand = re.split(r"[,;]|\.\s|\s-\s|\s+explanation", rest, maxsplit=1, flags=re.IGNORECASE)[0]
        cand = cand.rstrip(".*_` ")
    cand = cand.strip()
    labels = [_norm(o) for o in options]

    m = _INDEXED.fullmatch(cand)
    if m:
        idx = int(m.group(1))
        if not 1 <= idx <= len(options):
            raise UnknownOption(f"option {idx} out of range 1..{len(options)}")
        label = m.group(2)
        if label is not None and label.strip() and _norm(label) != labels[idx - 1]:
            raise UnknownOption(f"option {idx} does not carry label {label!r}")
        return idx
    if _norm(cand) in labels:
        return labels.index(_norm(cand)) + 1
    raise UnknownOption(f"cannot match {cand!r} to {list(options)}")


def _rule_based(text: str, registry: AttributeRegistry) -> AttributeStatusSet:
    lowered = " ".join(text.lower().split())
    cues = sorted(
        ((cue, spec.key, status) for spec in registry for status in STATUSES for cue in spec.cues[status]),
        key=lambda c: -len(c[0]),
    )
    taken = [False] * len(lowered)
    first_hit: dict[str, tuple[int, str]] = {}
    for cue, key, status in cues:
        for m in re.finditer(re.escape(cue), lowered):
            lo, hi = m.span()
            if any(taken[lo:hi]):
                continue
            taken[lo:hi] = [True] * (hi - lo)
            if key not in first_hit or lo < first_hit[key][0]:
                first_hit[key] = (lo, status)
    return AttributeStatusSet(
        {spec.key: StatusEntry(first_hit.get(spec.key, (0, "unspecified"))[1]) for spec in registry}
    )


def extract_statuses(
    text: str,
    registry: Optional[AttributeRegistry] = None,
    extractor="rule_based",
    queries: Optional[Mapping[str, AttributeQuery]] = None,
) -> AttributeStatusSet:
    """Tri-state status of every registry attribute as stated in ``text``.

    ``extractor`` is ``"rule_based"`` (offline cue-phrase matching) or an
    :class:`~echoexplain.llm_gateway.EndpointConfig` for LLM judging with one
    query per attribute.
    """
    registry = registry or load_registry()
    if extractor == "rule_based":
        return _rule_based(text, registry)

    from . import llm_gateway

    if not isinstance(extractor, llm_gateway.EndpointConfig):
        raise InputError(f"unknown extractor {extractor!r}")
    queries = queries or load_queries()
    missing = [k for k in registry.keys if k not in queries]
    if missing:
        raise RegistryMismatch(f"no judge query for attributes {missing}")
    batches = [build_attribute_query(queries[k], text) for k in registry.keys]
    answers = llm_gateway.complete_many(extractor.for_judge(), batches)
    return AttributeStatusSet({
        key: StatusEntry(OPTION_STATUS[parse_final_answer(ans, queries[key].options)])
        for key, ans in zip(registry.keys, answers)
    })


def verdict(gt: str, pred: str) -> str:
    """Comparison table; unspecified counts as normal for accuracy."""
    if gt != "unspecified" and pred != "unspecified" and gt != pred:
        return "contradiction"
    if pred == "pathological" and gt != "pathological":
        return "hallucination"
    if gt == "pathological" and pred == "unspecified":
        return "missing"
    return "match"


@dataclass(frozen=True)
class ExtractionOutcome:
    per_attribute: Mapping[str, tuple[str, str, str]]  # key -> (gt, pred, verdict)

    def count(self, v: str) -> int:
        return sum(1 for _, _, x in self.per_attribute.values() if x == v)

    @property
    def n_attributes(self) -> int:
        return len(self.per_attribute)


def compare_statuses(gt: AttributeStatusSet, pred: AttributeStatusSet) -> ExtractionOutcome:
    if list(gt.entries) != list(pred.entries):
        raise RegistryMismatch(f"attribute keys differ: {list(gt.entries)} vs {list(pred.entries)}")
    return ExtractionOutcome({
        k: (gt[k].status, pred[k].status, verdict(gt[k].status, pred[k].status)) for k in gt.entries
    })


def count_syllables(word: str) -> int:
    """Vowel groups, minus a silent trailing ``e``, at least one."""
    w = re.sub(r"[^a-z]", "", word.lower())
    n = len(re.findall(r"[aeiouy]+", w))
    if w.endswith("e") and not w.endswith("le") and n > 1:
        n -= 1
    return max(1, n)


_WORD = re.compile(r"[A-Za-z0-9]+(?:[.,'’][A-Za-z0-9]+)*")
_SENTENCE_END = re.compile(r"[.!?]+(?=\s|$)")


def text_counts(text: str) -> tuple[int, int, int]:
    """``(words, sentences, syllables)``."""
    words = _WORD.findall(text)
    if not words:
        raise EmptyText("text contains no words")
    pieces = [p for p in _SENTENCE_END.split(text.strip()) if _WORD.search(p)]
    return len(words), max(1, len(pieces)), sum(count_syllables(w) for w in words)


def flesch_reading_ease(text: str) -> float:
    n_words, n_sent, n_syll = text_counts(text)
    return 206.835 - 1.015 * (n_words / n_sent) - 84.6 * (n_syll / n_words)


@dataclass
class EvalReport:
    n_samples: int
    n_attributes: int
    mistral_accuracy: float
    mean_hallucinations: float
    mean_contradictions: float
    mean_missing: float
    flesch_mean: Optional[float]
    per_sample: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy_denominator": "all registry attributes x samples",
            "n_samples": self.n_samples,
            "n_attributes": self.n_attributes,
            "mistral_accuracy": self.mistral_accuracy,
            "mean_hallucinations": self.mean_hallucinations,
            "mean_contradictions": self.mean_contradictions,
            "mean_missing": self.mean_missing,
            "flesch_mean": self.flesch_mean,
            "per_sample": self.per_sample,
        }

    def to_table(self, name: str = "prediction") -> str:
        head = ["model", "mistral acc", "halluc.", "contradict.", "missing", "Flesch"]
        flesch = "-" if self.flesch_mean is None else f"{self.flesch_mean:.2f}"
        row = [name, f"{self.mistral_accuracy:.2f}", f"{self.mean_hallucinations:.2f}",
               f"{self.mean_contradictions:.2f}", f"{self.mean_missing:.2f}", flesch]
        widths = [max(len(h), len(r)) for h, r in zip(head, row)]
        fmt = lambda cells: " | ".join(c.ljust(w) if i == 0 else c.rjust(w)  # noqa: E731
                                       for i, (c, w) in enumerate(zip(cells, widths)))
        return "\n".join([fmt(head), "-+-".join("-" * w for w in widths), fmt(row)])


def aggregate(
    outcomes: Sequence[ExtractionOutcome],
    texts: Sequence[str] = (),
    ids: Optional[Sequence] = None,
) -> EvalReport:
    """Accuracy over every (sample, attribute) pair and mean verdict counts per sample."""
    outcomes = list(outcomes)
    if not outcomes:
        raise EmptyInput("no outcomes to aggregate")
    if texts and len(texts) != len(outcomes):
        raise InputError("texts and outcomes differ in length")
    ids = list(ids) if ids is not None else list(range(len(outcomes)))
    n = len(outcomes)
    total = sum(o.n_attributes for o in outcomes)
    per_sample = []
    scores = []
    for i, o in enumerate(outcomes):
        row = {"id": ids[i], **{v: o.count(v) for v in VERDICTS}}
        if texts:
            try:
                row["flesch"] = flesch_reading_ease(texts[i])
                scores.append(row["flesch"])
            except EmptyText:
                row["flesch"] = None
        row["verdicts"] = {k: v for k, (_, _, v) in o.per_attribute.items()}
        per_sample.append(row)
    return EvalReport(
        n_samples=n,
        n_attributes=outcomes[0].n_attributes,
        mistral_accuracy=sum(o.count("match") for o in outcomes) / total,
        mean_hallucinations=sum(o.count("hallucination") for o in outcomes) / n,
        mean_contradictions=sum(o.count("contradiction") for o in outcomes) / n,
        mean_missing=sum(o.count("missing") for o in outcomes) / n,
        flesch_mean=sum(scores) / len(scores) if scores else None,
        per_sample=per_sample,
    )


def read_pairs(lines: Iterable[str]) -> list[dict]:
    """Parse JSON-lines ``{id, gt_text, pred_text}`` records."""
    pairs = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRow(lineno, f"invalid JSON: {exc.msg}") from None
        if not isinstance(doc, dict) or not all(k in doc for k in ("id", "gt_text", "pred_text")):
            raise MalformedRow(lineno, "expected an object with id, gt_text and pred_text")
        pairs.append(doc)
    if not pairs:
        raise EmptyInput("no evaluation pairs")
    return pairs


def evaluate_pairs(
    pairs: Sequence[Mapping],
    registry: Optional[AttributeRegistry] = None,
    extractor="rule_based",
    queries=None,
    jobs: int = 1,
) -> EvalReport:
    """Extract statuses from both texts of every pair, compare, aggregate."""
    registry = registry or load_registry()
    if not pairs:
        raise EmptyInput("no evaluation pairs")

    def one(pair):
        gt = extract_statuses(pair["gt_text"], registry, extractor, queries)
        pred = extract_statuses(pair["pred_text"], registry, extractor, queries)
        return compare_statuses(gt, pred)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, pairs))
    else:
        outcomes = [one(p) for p in pairs]
    return aggregate(outcomes, [p["pred_text"] for p in pairs], [p["id"] for p in pairs])
