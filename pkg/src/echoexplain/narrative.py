"""Attribute statuses, template sentences and LLM prompt assembly.

The attribute registry is data (``data/registry.json`` by default): for each
attribute it names a classification binding, the classes that binding can
produce with their tri-state status, basic and elaborated sentence templates,
and the cue phrases used by the rule-based extractor in :mod:`nle_eval`.
"""
from __future__ import annotations

import json
import random
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Union

from .config import Thresholds, tomllib
from .errors import EmptyExemplars, EmptyTemplatePool, InputError, UnknownAttributeKey
from .geometry import AttributeVector

STATUSES = ("pathological", "normal", "unspecified")
MEASURED_PREFIX = "In the echocardiography image, it is measured that "
MAX_EXEMPLARS = 8


@dataclass(frozen=True)
class ClassTemplates:
    status: str
    basic: str
    elaborated: tuple[str, ...]


@dataclass(frozen=True)
class AttributeSpec:
    key: str
    name: str
    binding: str
    decimals: int
    classes: Mapping[str, ClassTemplates]
    unspecified: ClassTemplates
    cues: Mapping[str, tuple[str, ...]]

    def templates_for(self, status: str, category: Optional[str]) -> ClassTemplates:
        if status != "unspecified":
            return self.classes[category]
        if category is not None and category in self.classes:
            return self.classes[category]
        return self.unspecified


_FIELDS = {"value", "class"}


def _check_template(text: str, where: str):
    for _, name, spec, conv in string.Formatter().parse(text):
        if name is not None and name not in _FIELDS:
            raise InputError(f"{where}: unsupported placeholder {{{name}}}")


@dataclass(frozen=True)
class AttributeRegistry:
    attributes: tuple[AttributeSpec, ...]

    def __post_init__(self):
        keys = [a.key for a in self.attributes]
        if len(set(keys)) != len(keys):
            raise InputError(f"duplicate attribute keys in registry: {keys}")
        if not keys:
            raise InputError("registry has no attributes")

    @property
    def keys(self) -> tuple[str, ...]:
        return tuple(a.key for a in self.attributes)

    def __getitem__(self, key: str) -> AttributeSpec:
        for a in self.attributes:
            if a.key == key:
                return a
        raise UnknownAttributeKey(key)

    def __len__(self):
        return len(self.attributes)

    def __iter__(self):
        return iter(self.attributes)

    @classmethod
    def from_dict(cls, doc: dict) -> "AttributeRegistry":
        specs = []
        try:
            for item in doc["attributes"]:
                key = item["key"]
                classes = {}
                for name, c in item["classes"].items():
                    if c["status"] not in STATUSES:
                        raise InputError(f"{key}.{name}: unknown status {c['status']!r}")
                    classes[name] = ClassTemplates(c["status"], c["basic"], tuple(c.get("elaborated", ())))
                u = item["unspecified"]
                unspecified = ClassTemplates("unspecified", u["basic"], tuple(u.get("elaborated", ())))
                cues = {s: tuple(p.lower() for p in item.get("cues", {}).get(s, ())) for s in STATUSES}
                spec = AttributeSpec(
                    key=key,
                    name=item.get("name", key),
                    binding=item["binding"],
                    decimals=int(item.get("decimals", 2)),
                    classes=classes,
                    unspecified=unspecified,
                    cues=cues,
                )
                for ct_name, ct in list(classes.items()) + [("unspecified", unspecified)]:
                    _check_template(ct.basic, f"{key}.{ct_name}.basic")
                    for t in ct.elaborated:
                        _check_template(t, f"{key}.{ct_name}.elaborated")
                specs.append(spec)
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed registry document: missing or bad field {exc}") from exc
        return cls(tuple(specs))


def load_registry(path: Union[str, Path, None] = None) -> AttributeRegistry:
    """Load a registry from JSON/TOML, or the packaged default when ``path`` is None."""
    if path is None:
        raw = resources.files("echoexplain").joinpath("data/registry.json").read_text("utf-8")
        return AttributeRegistry.from_dict(json.loads(raw))
    path = Path(path)
    text = path.read_text("utf-8")
    doc = tomllib.loads(text) if path.suffix.lower() == ".toml" else json.loads(text)
    return AttributeRegistry.from_dict(doc)


# -- statuses ----------------------------------------------------------------

@dataclass(frozen=True)
class StatusEntry:
    status: str
    value: Optional[float] = None
    category: Optional[str] = None

    def __post_init__(self):
        if self.status not in STATUSES:
            raise InputError(f"unknown status {self.status!r}")
        if self.status == "unspecified" and self.value is not None:
            raise InputError("an unspecified attribute carries no value")


@dataclass(frozen=True)
class AttributeStatusSet:
    entries: Mapping[str, StatusEntry]

    def __getitem__(self, key: str) -> StatusEntry:
        return self.entries[key]

    def statuses(self) -> dict[str, str]:
        return {k: e.status for k, e in self.entries.items()}

    def check_against(self, registry: AttributeRegistry):
        if list(self.entries) != list(registry.keys):
            raise UnknownAttributeKey(
                f"status keys {list(self.entries)} do not match registry {list(registry.keys)}"
            )

    @classmethod
    def from_statuses(cls, statuses: Mapping[str, str]) -> "AttributeStatusSet":
        return cls({k: StatusEntry(s) for k, s in statuses.items()})


def _bin3(value, cuts, names):
    lo, mid, hi = cuts
    if value < lo:
        return names[0]
    if value < mid:
        return names[1]
    if value <= hi:
        return names[2]
    return names[3]


def _bulge(v: AttributeVector, cfg: Thresholds):
    from .geometry import classify_bulge
    return classify_bulge(v.bulge_score, cfg.bulge_thresholds), v.bulge_score


def _lv_shape(v, cfg):
    r = v.length_width_ratio
    return ("normal" if r >= cfg.lv_shape_min_ratio else "dilated"), r


def _segment_motion(v, cfg):
    labels = v.segment_labels
    if not labels:
        return None
    for worst in ("dyskinetic", "hypokinetic"):
        if worst in labels:
            return worst, sum(lab == worst for lab in labels)
    return "normal", 0


def _basal_motion(v, cfg):
    pct = v.basal_vertical_percent
    return ("normal" if pct >= cfg.basal_motion_min_percent else "reduced"), pct


def _apex_motion(v, cfg):
    pct = v.apex_percent
    return ("moving" if pct > cfg.apex_motion_percent else "stable"), pct


def _sector(v, cfg):
    if v.sector_ratio is None:
        return None
    return ("cut" if v.sector_ratio < cfg.sector_min_ratio else "visible"), v.sector_ratio


def _image_quality(v, cfg):
    if v.contrast is None:
        return None
    floor = cfg.contrast_min_difference if v.contrast_mode == "difference" else cfg.contrast_min
    return ("reduced" if v.contrast < floor else "good"), v.contrast


def _ef(v, cfg):
    return _bin3(v.ef, cfg.ef_bins, ("reduced", "mildly_reduced", "normal", "hyperdynamic")), v.ef


def _area_change(v, cfg):
    pct = v.area_change_percent
    return ("normal" if pct >= cfg.area_change_min_percent else "reduced"), pct


# binding name -> (vector, thresholds) -> (class, value) or None when absent
BINDINGS: dict[str, Callable] = {
    "bulge": _bulge,
    "lv_shape": _lv_shape,
    "segment_motion": _segment_motion,
    "basal_motion": _basal_motion,
    "apex_motion": _apex_motion,
    "sector": _sector,
    "image_quality": _image_quality,
    "ef": _ef,
    "area_change": _area_change,
}


def classify_attributes(
    vector: AttributeVector,
    registry: AttributeRegistry,
    config: Thresholds = Thresholds(),
) -> AttributeStatusSet:
    """Map each registry attribute to a class and tri-state status."""
    entries = {}
    for spec in registry:
        if spec.binding not in BINDINGS:
            raise UnknownAttributeKey(f"{spec.key}: no classification binding {spec.binding!r}")
        got = BINDINGS[spec.binding](vector, config)
        if got is None:
            entries[spec.key] = StatusEntry("unspecified")
            continue
        category, value = got
        if category not in spec.classes:
            raise UnknownAttributeKey(f"{spec.key}: registry has no class {category!r}")
        status = spec.classes[category].status
        entries[spec.key] = StatusEntry(
            status, None if status == "unspecified" else float(value), category
        )
    return AttributeStatusSet(entries)


# -- text ----------------------------------------------------------------------

def _render(template: str, spec: AttributeSpec, entry: StatusEntry) -> str:
    value = "" if entry.value is None else f"{entry.value:.{spec.decimals}f}"
    return template.format(value=value, **{"class": entry.category or ""})


def sentence_for(spec: AttributeSpec, entry: StatusEntry) -> str:
    return _render(spec.templates_for(entry.status, entry.category).basic, spec, entry)


def basic_sentences(
    statuses: AttributeStatusSet,
    vector: Optional[AttributeVector] = None,
    registry: Optional[AttributeRegistry] = None,
) -> str:
    """One templated sentence per registry attribute, in registry order."""
    registry = registry or load_registry()
    return " ".join(sentence_for(spec, statuses[spec.key]) for spec in registry)


def _template_index(seed: int, key: str, n: int) -> int:
    # seed 0 is the canonical rendering (first template of every pool); other
    # seeds step through the pool with a stride fixed per attribute
    if n < 2:
        return 0
    stride = 1 + random.Random(key).randrange(n - 1)
    return (seed * stride) % n


def synthetic_explanation(
    statuses: AttributeStatusSet,
    registry: Optional[AttributeRegistry] = None,
    seed: int = 0,
) -> str:
    """Expert-style elaborated text: one sentence per attribute drawn from its pool."""
    registry = registry or load_registry()
    parts = []
    for spec in registry:
        entry = statuses[spec.key]
        pool = spec.templates_for(entry.status, entry.category).elaborated
        if not pool:
            raise EmptyTemplatePool(f"{spec.key}: no elaborated templates for {entry.category or entry.status}")
        parts.append(_render(pool[_template_index(seed, spec.key, len(pool))], spec, entry))
    return " ".join(parts)


@dataclass(frozen=True)
class RefinementPrompt:
    instruction: str
    input: str

    def to_dict(self) -> dict:
        return {"instruction": self.instruction, "input": self.input}


def format_ef(ef_percent: float) -> str:
    text = f"{ef_percent:.2f}".rstrip("0").rstrip(".")
    return text or "0"


def build_refinement_prompt(ef_percent: float, basic_text: str) -> RefinementPrompt:
    """Instruction/input pair for the explanation-refinement model."""
    if not 0.0 <= ef_percent <= 100.0:
        raise InputError(f"EF must be within [0, 100], got {ef_percent}")
    body = basic_text.strip()
    if body:
        body = body[0].lower() + body[1:]
    return RefinementPrompt(
        instruction=f"Explain why the ejection fraction is estimated as {format_ef(ef_percent)}%.",
        input=MEASURED_PREFIX + body,
    )


SELF_INSTRUCT_HEADER = (
    "You are an experienced cardiologist who explains echocardiography measurements.\n"
    "Each example below lists the measured findings as basic sentences, followed by an expert "
    "explanation of the ejection fraction. Study how the expert reasons from the findings to the "
    "ejection fraction."
)
SELF_INSTRUCT_STEPS = (
    "Now reason step by step. First identify which findings are abnormal. Then decide how each "
    "abnormal finding affects the ejection fraction or its reliability. Finally write one expert "
    "explanation for the new findings in the same style as the examples."
)


def build_self_instruct_prompt(exemplars: Iterable[Mapping[str, str]], new_input: str) -> str:
    """Chain-of-thought prompt that asks a strong LLM for a new expert explanation."""
    exemplars = list(exemplars)
    if not exemplars:
        raise EmptyExemplars("at least one exemplar is required")
    if len(exemplars) > MAX_EXEMPLARS:
        raise InputError(f"at most {MAX_EXEMPLARS} exemplars are supported, got {len(exemplars)}")
    blocks = [SELF_INSTRUCT_HEADER]
    for i, ex in enumerate(exemplars, 1):
        blocks.append(
            f"Example {i}\nBasic sentences: {ex['input'].strip()}\n"
            f"Expert explanation: {ex['expert_explanation'].strip()}"
        )
    blocks.append(SELF_INSTRUCT_STEPS)
    blocks.append(f"Basic sentences: {new_input.strip()}\nExpert explanation:")
    return "\n\n".join(blocks)


@dataclass
class NarrativeBundle:
    video_id: str
    ef_percent: float
    basic_text: str
    elaborated_text: str
    refinement_prompt: RefinementPrompt
    provenance: list = field(default_factory=list)
    seed: int = 0
    refined_text: Optional[str] = None

    def to_dict(self) -> dict:
        doc = {
            "video_id": self.video_id,
            "ef_percent": self.ef_percent,
            "seed": self.seed,
            "basic_text": self.basic_text,
            "elaborated_text": self.elaborated_text,
            "refinement_prompt": self.refinement_prompt.to_dict(),
            "provenance": self.provenance,
        }
        if self.refined_text is not None:
            doc["refined_text"] = self.refined_text
        return doc


def make_bundle(
    vector: AttributeVector,
    registry: Optional[AttributeRegistry] = None,
    config: Thresholds = Thresholds(),
    seed: int = 0,
) -> NarrativeBundle:
    """Classify a measured vector and render all phase-one texts for it."""
    registry = registry or load_registry()
    statuses = classify_attributes(vector, registry, config)
    basic = basic_sentences(statuses, vector, registry)
    provenance = [
        {"key": spec.key, "status": statuses[spec.key].status, "class": statuses[spec.key].category,
         "sentence": sentence_for(spec, statuses[spec.key])}
        for spec in registry
    ]
    ef = min(100.0, max(0.0, vector.ef))
    return NarrativeBundle(
        video_id=vector.video_id,
        ef_percent=vector.ef,
        basic_text=basic,
        elaborated_text=synthetic_explanation(statuses, registry, seed),
        refinement_prompt=build_refinement_prompt(ef, basic),
        provenance=provenance,
        seed=seed,
    )
