"""Instruction and response diversity: evolution prompts, k-sampling, SFT
records.

Instruction evolution is two-pronged. In depth, a problem is first
decomposed into ordered sub-problems (one-to-many, so the step structure
survives) and the sub-problems are then made harder. In breadth, a new
problem is mutated from an existing one inside an explicit scope constraint
so it stays solvable. Prompt wording lives in versioned templates; the
template id travels with every generated record.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .client import CompletionClient, CompletionRequest, Message
from .extract import ExtractionPatterns, DEFAULT_PATTERNS
from .verify import GenMeta, MathItem, ReasoningPath


class TemplateError(Exception):
    pass


class EvolutionParseError(Exception):
    pass


class RecordError(Exception):
    pass


EVOLUTION_TEMPLATES = {
    "depth-decompose/v1": (
        "Read the math problem below and break it into the smallest series of "
        "self-contained sub-problems. Each sub-problem must be answerable on "
        "its own, and their order must follow the steps needed to solve the "
        "original problem. Reply with a numbered list only.\n\n"
        "Problem: {question}"
    ),
    "depth-enhance/v1": (
        "Rewrite each sub-problem below to be noticeably harder while keeping "
        "it solvable with a single numeric answer. Keep the numbering and do "
        "not merge items.\n\n{sub_problems}"
    ),
    "breadth-mutate/v1": (
        "Write one brand-new math problem inspired by the example below. The "
        "new problem must stay within this scope: {scope}. Reply with the new "
        "problem text only.\n\nExample: {question}"
    ),
}

META_PROMPTS = {
    "vicuna/v1": (
        "A chat between a curious user and an artificial intelligence "
        "assistant. The assistant gives helpful, detailed, and polite answers "
        "to the user's questions. USER: {instruction}. ASSISTANT: {response}"
    ),
}

EVOLUTION_MODES = ("depth-decompose", "depth-enhance", "breadth-mutate")


@dataclass(frozen=True)
class EvolutionRequest:
    mode: str
    source: Union[MathItem, tuple[str, ...]]
    rendered_prompt: str
    template_id: str
    scope_constraint: Optional[str] = None


def _render(template_id: str, **fields) -> str:
    try:
        template = EVOLUTION_TEMPLATES[template_id]
    except KeyError:
        raise TemplateError(f"unknown template {template_id!r}") from None
    try:
        return template.format(**fields)
    except (KeyError, IndexError) as err:
        raise TemplateError(f"template {template_id} missing field: {err}") from None


def build_evolution_prompt(mode: str,
                           source: Union[MathItem, list[str]],
                           scope: Optional[str] = None,
                           template_version: str = "v1") -> EvolutionRequest:
    """Deterministic prompt rendering; the source question text is embedded
    verbatim."""
    if mode not in EVOLUTION_MODES:
        raise ValueError(f"unknown evolution mode {mode!r}")
    template_id = f"{mode}/{template_version}"
    if mode == "depth-decompose":
        if not isinstance(source, MathItem):
            raise ValueError("depth-decompose takes a MathItem")
        prompt = _render(template_id, question=source.question)
        return EvolutionRequest(mode, source, prompt, template_id)
    if mode == "depth-enhance":
        subs = tuple(source) if not isinstance(source, MathItem) else ()
        if not subs:
            raise ValueError("depth-enhance requires a non-empty sub-problem list")
        listing = "\n".join(f"{i}. {q}" for i, q in enumerate(subs, 1))
        prompt = _render(template_id, sub_problems=listing)
        return EvolutionRequest(mode, subs, prompt, template_id)
    # breadth-mutate
    if not isinstance(source, MathItem):
        raise ValueError("breadth-mutate takes a MathItem")
    if not scope:
        raise ValueError("breadth-mutate requires a scope constraint")
    prompt = _render(template_id, question=source.question, scope=scope)
    return EvolutionRequest(mode, source, prompt, template_id,
                            scope_constraint=scope)


_NUMBERED = re.compile(r"^\s*(\d+)[.)、]\s*(.+?)\s*$")


def parse_numbered_list(text: str) -> list[str]:
    """Sub-problems from a model reply rendered as '1. ... 2. ...'."""
    items = []
    for line in text.splitlines():
        m = _NUMBERED.match(line)
        if m:
            items.append(m.group(2))
    if not items:
        raise EvolutionParseError(f"no numbered items in reply: {text[:80]!r}")
    return items


# --------------------------------------------------------------------------
# response sampling

ZERO_SHOT_COT_SUFFIX = "Let's think step by step."

STRATEGIES = ("zero-shot", "zero-shot-cot", "few-shot-cot")


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.7   # the sampling default for reasoning paths
    top_p: float = 1.0
    max_tokens: int = 2048
    repetition_penalty: Optional[float] = None


class PromptLibrary:
    """Few-shot CoT prompts as opaque text assets, one file per prompt id."""

    def __init__(self, directory):
        self.directory = Path(directory)

    def load(self, prompt_id: str) -> str:
        path = self.directory / f"{prompt_id}.txt"
        if not path.exists():
            raise FileNotFoundError(f"no prompt {prompt_id!r} in {self.directory}")
        return path.read_text(encoding="utf-8")

    def ids(self) -> list[str]:
        return sorted(p.stem for p in self.directory.glob("*.txt"))


def build_question_prompt(item: MathItem, strategy: str,
                          prompt_library: Optional[PromptLibrary] = None,
                          prompt_id: str = "") -> str:
    if strategy == "zero-shot":
        return item.question
    if strategy == "zero-shot-cot":
        return f"{item.question}\n{ZERO_SHOT_COT_SUFFIX}"
    if strategy == "few-shot-cot":
        if prompt_library is None or not prompt_id:
            raise ValueError("few-shot-cot requires a prompt library and prompt_id")
        shots = prompt_library.load(prompt_id).rstrip()
        return f"{shots}\n\nQuestion: {item.question}"
    raise ValueError(f"unknown strategy {strategy!r}")


def sample_responses(client: CompletionClient, item: MathItem, k: int,
                     strategy: str = "zero-shot-cot",
                     params: SamplingParams = SamplingParams(),
                     patterns: ExtractionPatterns = DEFAULT_PATTERNS,
                     model_id: str = "default",
                     endpoint_id: str = "default",
                     prompt_library: Optional[PromptLibrary] = None,
                     prompt_id: str = "",
                     allow_partial: bool = False) -> list[ReasoningPath]:
    """Draw k candidate reasoning paths and run extraction on each."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    prompt = build_question_prompt(item, strategy, prompt_library, prompt_id)
    request = CompletionRequest(
        endpoint_id=endpoint_id, model_id=model_id,
        messages=(Message("user", prompt),),
        temperature=params.temperature, top_p=params.top_p,
        max_tokens=params.max_tokens,
        repetition_penalty=params.repetition_penalty, n_samples=k)
    response = client.complete(request)
    if len(response.texts) != k and not allow_partial:
        raise RuntimeError(f"expected {k} samples, got {len(response.texts)}")
    gen = GenMeta(model_id=model_id, strategy=strategy,
                  temperature=params.temperature, prompt_id=prompt_id)
    return [ReasoningPath.from_text(text, gen, patterns, path_id=item.id)
            for text in response.texts]


# --------------------------------------------------------------------------
# SFT records

@dataclass(frozen=True)
class SftRecord:
    instruction: str
    response: str
    meta_prompt_id: str
    provenance: dict = field(default_factory=dict)

    def render(self) -> str:
        template = META_PROMPTS.get(self.meta_prompt_id)
        if template is None:
            raise TemplateError(f"unknown meta prompt {self.meta_prompt_id!r}")
        return template.format(instruction=self.instruction,
                               response=self.response)


def build_sft_record(item: MathItem, path: ReasoningPath,
                     meta_prompt_id: str = "vicuna/v1") -> SftRecord:
    if not path.text.strip():
        raise RecordError("empty response text")
    if not item.question.strip():
        raise RecordError("empty instruction text")
    if meta_prompt_id not in META_PROMPTS:
        raise TemplateError(f"unknown meta prompt {meta_prompt_id!r}")
    provenance = {
        "item_id": item.id,
        "model_id": path.gen.model_id,
        "strategy": path.gen.strategy,
        "temperature": path.gen.temperature,
        "prompt_id": path.gen.prompt_id,
    }
    return SftRecord(instruction=item.question, response=path.text,
                     meta_prompt_id=meta_prompt_id, provenance=provenance)


def parse_rendered(rendered: str,
                   meta_prompt_id: str = "vicuna/v1") -> tuple[str, str]:
    """Inverse of SftRecord.render for marker-free content."""
    template = META_PROMPTS.get(meta_prompt_id)
    if template is None:
        raise TemplateError(f"unknown meta prompt {meta_prompt_id!r}")
    prefix, rest = template.split("{instruction}")
    middle, suffix = rest.split("{response}")
    if not rendered.startswith(prefix):
        raise RecordError("rendered text does not match the meta prompt")
    body = rendered[len(prefix):]
    if suffix and body.endswith(suffix):
        body = body[:-len(suffix)]
    try:
        instruction, response = body.split(middle, 1)
    except ValueError:
        raise RecordError("rendered text does not match the meta prompt") from None
    return instruction, response
