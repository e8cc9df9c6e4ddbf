"""
Material inference from EM parameters: prompt assembly, an OpenAI-compatible
chat client, verdict parsing and the rule-table classifier used offline and as
the ablation baseline.
"""

import logging
import math
import os
import re
import threading
import time
from typing import Annotated, Any, Callable, Literal, Mapping, Protocol, Sequence

import pydantic
import requests
from pydantic import Field, SecretStr
from typing_extensions import Self

from . import records
from .config_base import ConfigBase
from .errors import (
    EndpointError,
    EndpointUnreachableError,
    InvalidConfigError,
    RadarMatError,
)
from .knowledge_rag import Chunk, Embedder, HashedBowEmbedder, KnowledgeIndex, SearchHit
from .radar_core import EMParameters


logger = logging.getLogger(__name__)

MaterialClass = Literal["metal", "ceramic", "glass", "plastic", "other", "unknown"]
VerdictMode = Literal["llm+rag", "llm-only", "rule-based"]

STUB_RULE_TABLE_URL = "stub://rule-table"
PARAMS_BEGIN = "[RADAR PARAMETERS]"
PARAMS_END = "[END RADAR PARAMETERS]"
RATIONALE_LIMIT = 2000

# network failures worth another attempt
TRANSIENT_ERRORS = (
    requests.ConnectionError,
    requests.Timeout,
    requests.exceptions.ChunkedEncodingError,
    requests.exceptions.ContentDecodingError,
)
BAD_URL_ERRORS = (
    requests.exceptions.InvalidSchema,
    requests.exceptions.MissingSchema,
    requests.exceptions.InvalidURL,
)

ENV_OVERRIDES = {
    "base_url": "RADARMAT_LLM_BASE_URL",
    "model": "RADARMAT_LLM_MODEL",
    "api_key": "RADARMAT_LLM_API_KEY",
}

SYNONYMS: dict[str, tuple[str, ...]] = {
    "metal": (
        "metal", "metallic", "steel", "stainless steel", "aluminium", "aluminum",
        "iron", "copper", "brass", "bronze", "tin", "titanium", "chrome", "zinc",
        "silver", "gold", "conductor",
    ),
    "ceramic": (
        "ceramic", "ceramics", "porcelain", "stoneware", "earthenware", "pottery",
        "clay", "terracotta", "china", "tile",
    ),
    "glass": ("glass", "glassware", "borosilicate", "pyrex", "crystal"),
    "plastic": (
        "plastic", "plastics", "polymer", "polypropylene", "polyethylene", "pet",
        "hdpe", "ldpe", "pvc", "polystyrene", "acrylic", "abs", "polycarbonate",
        "nylon", "resin",
    ),
}

SYSTEM_TEXT = (
    "You are an expert in millimetre-wave radar sensing and dielectric materials. "
    "You identify the material of an object from electromagnetic parameters "
    "measured by a 60 GHz FMCW radar."
)

INSTRUCTION_TEXT = (
    "Reason step by step. First judge whether the range, velocity, angle and SNR "
    "describe a valid single-object measurement. Then interpret the radar cross "
    "section, the power reflection coefficient, the Fresnel reflection coefficient "
    "and the relative permittivity, and compare them with the reference material "
    "properties you know or were given. A metal_like_flag of true means the "
    "reflectivity saturated and epsilon_r is not finite. Name the material freely; "
    "it need not belong to a fixed list. End your answer with one final line of the "
    "exact form:\nMATERIAL: <material name>"
)

RETRIEVAL_TEMPLATE = (
    "relative permittivity dielectric constant epsilon_r {epsilon_r}; "
    "fresnel reflection coefficient gamma_f {gamma_f:.3f}; "
    "power reflection coefficient rho {rho:.3g}; "
    "radar cross section sigma {sigma:.3g} m^2"
)

_MARKER = re.compile(r"^[\s*_`#>\-]*material\s*[:：]\s*(.*?)\s*$", re.IGNORECASE | re.MULTILINE)
_THINK = re.compile(r"<think>.*?(</think>|\Z)", re.IGNORECASE | re.DOTALL)
_WORD = re.compile(r"[^\W_]+")

_endpoint_locks: dict[str, threading.Lock] = {}
_endpoint_locks_guard = threading.Lock()


class EndpointConfig(ConfigBase):
    base_url: Annotated[
        str, Field(description="OpenAI-compatible API base URL, or stub://rule-table")
    ] = "http://localhost:11434/v1"
    model: Annotated[str, Field(description="Chat model name")] = "deepseek-r1:14b"
    api_key: Annotated[
        SecretStr | None, Field(description="Bearer token; never logged")
    ] = None
    timeout_s: Annotated[float, Field(gt=0, description="Per-request timeout, s")] = 120.0
    retries: Annotated[int, Field(ge=0, description="Retries after the first attempt")] = 2
    backoff_s: Annotated[
        float, Field(ge=0, description="First retry delay, doubled on each retry")
    ] = 1.0
    temperature: Annotated[float, Field(ge=0)] = 0.0
    max_tokens: Annotated[int, Field(ge=1)] = 2048

    def with_env_overrides(self, environ: Mapping[str, str] | None = None) -> Self:
        environ = os.environ if environ is None else environ
        updates = {
            field: environ[var] for field, var in ENV_OVERRIDES.items() if environ.get(var)
        }
        if not updates:
            return self
        return type(self).model_validate({**dict(self.model_dump()), **updates})


class IdentifyOptions(ConfigBase):
    with_rag: Annotated[bool, Field(description="Retrieve knowledge chunks for the prompt")] = True
    use_llm: Annotated[
        bool, Field(description="Ask the LLM; otherwise use the rule table")
    ] = True
    k: Annotated[int, Field(ge=1, description="Chunks to retrieve")] = 4
    fallback_to_rules: Annotated[
        bool, Field(description="Use the rule table when the endpoint fails")
    ] = False


class RuleTable(ConfigBase):
    """Decision list over (epsilon_r, gamma_f), evaluated top-down on half-open intervals."""

    metal_gamma: float = 0.95
    ceramic_split: float = 5.5
    dual_eps_low: float = 4.0
    dual_eps_high: float = 9.0
    dual_gamma_low: float = 0.3
    dual_gamma_high: float = 0.6
    dielectric_eps_low: float = 3.5
    plastic_eps_low: float = 1.8

    def classify(self, epsilon_r: float, gamma_f: float, metal_like: bool) -> tuple[str, str]:
        """(class, the rule that fired)."""
        eps = epsilon_r
        if metal_like or gamma_f >= self.metal_gamma or math.isinf(eps):
            return "metal", f"gamma_f {gamma_f:.3f} >= {self.metal_gamma} or metal-like"
        split = "ceramic" if eps >= self.ceramic_split else "glass"
        if (
            self.dual_eps_low <= eps < self.dual_eps_high
            and self.dual_gamma_low <= gamma_f < self.dual_gamma_high
        ):
            return split, (
                f"epsilon_r {eps:.2f} in [{self.dual_eps_low}, {self.dual_eps_high}) and "
                f"gamma_f {gamma_f:.3f} in [{self.dual_gamma_low}, {self.dual_gamma_high})"
            )
        if self.dielectric_eps_low <= eps < self.dual_eps_high:
            return split, f"epsilon_r {eps:.2f} in [{self.dielectric_eps_low}, {self.dual_eps_high})"
        if self.plastic_eps_low <= eps < self.dielectric_eps_low:
            return "plastic", f"epsilon_r {eps:.2f} in [{self.plastic_eps_low}, {self.dielectric_eps_low})"
        return "other", f"epsilon_r {eps:.2f} outside every tabulated range"


class MaterialVerdict(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True)

    label: str
    canonical_class: MaterialClass
    rationale: str = ""
    sources: tuple[str, ...] = ()
    mode: VerdictMode = "llm-only"

    @pydantic.model_validator(mode="after")
    def check_sources(self) -> Self:
        if self.sources and self.mode != "llm+rag":
            raise ValueError(f"a {self.mode} verdict cannot cite sources")
        return self

    def to_record(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "canonical_class": self.canonical_class,
            "mode": self.mode,
            "sources": list(self.sources),
            "rationale": self.rationale,
        }


class ContextChunk(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True)

    doc_id: str
    seq: int
    text: str
    score: float | None = None


class Prompt(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True)

    system_text: str
    context_chunks: tuple[ContextChunk, ...] = ()
    parameter_block: str
    instruction_text: str

    def render(self) -> str:
        """The user message."""
        parts = []
        if self.context_chunks:
            parts.append("Reference knowledge:")
            for i, c in enumerate(self.context_chunks, 1):
                parts.append(f"[source {i}: {c.doc_id}#{c.seq}]\n{c.text.strip()}")
        parts.append(
            "Measured radar parameters (SI units; angle in degrees, SNR in dB):\n"
            f"{PARAMS_BEGIN}\n{self.parameter_block}{PARAMS_END}"
        )
        parts.append(self.instruction_text)
        return "\n\n".join(parts)

    def messages(self) -> list[dict[str, str]]:
        return [
            {"role": "system", "content": self.system_text},
            {"role": "user", "content": self.render()},
        ]


class CompletionClient(Protocol):
    def complete(self, prompt: Prompt) -> str: ...


def retrieval_query(params: EMParameters) -> str:
    epsilon = "infinite (metal-like)" if math.isinf(params.epsilon_r) else f"{params.epsilon_r:.2f}"
    return RETRIEVAL_TEMPLATE.format(
        epsilon_r=epsilon, gamma_f=params.gamma_f, rho=params.rho, sigma=params.rcs_sigma
    )


def assemble_prompt(
    params: EMParameters,
    chunks: Sequence[SearchHit | Chunk],
    with_rag: bool,
) -> Prompt:
    if chunks and not with_rag:
        raise InvalidConfigError("context chunks given for a prompt without retrieval")
    context = []
    for item in chunks:
        chunk, score = (item.chunk, item.score) if isinstance(item, SearchHit) else (item, None)
        context.append(
            ContextChunk(doc_id=chunk.doc_id, seq=chunk.seq, text=chunk.text, score=score)
        )
    return Prompt(
        system_text=SYSTEM_TEXT,
        context_chunks=tuple(context),
        parameter_block=records.format_record(params.to_record()),
        instruction_text=INSTRUCTION_TEXT,
    )


def _endpoint_lock(base_url: str) -> threading.Lock:
    with _endpoint_locks_guard:
        return _endpoint_locks.setdefault(base_url, threading.Lock())


class ChatClient:
    """
    Chat-completion client with bounded retries and exponential backoff.

    Requests to one base URL are serialized across all clients in the process.
    """

    def __init__(
        self,
        config: EndpointConfig,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self._session = session or requests.Session()
        self._sleep = sleep

    @property
    def url(self) -> str:
        return f"{self.config.base_url.rstrip('/')}/chat/completions"

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key is not None:
            headers["Authorization"] = f"Bearer {self.config.api_key.get_secret_value()}"
        return headers

    def complete(self, prompt: Prompt) -> str:
        cfg = self.config
        payload = {
            "model": cfg.model,
            "messages": prompt.messages(),
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
            "stream": False,
        }
        attempts = cfg.retries + 1
        last_error: Exception | None = None

        with _endpoint_lock(cfg.base_url):
            for attempt in range(attempts):
                if attempt:
                    self._sleep(cfg.backoff_s * 2 ** (attempt - 1))
                logger.debug("POST %s model=%s attempt %d/%d", self.url, cfg.model, attempt + 1, attempts)
                try:
                    response = self._session.post(
                        self.url, json=payload, headers=self._headers(), timeout=cfg.timeout_s
                    )
                except BAD_URL_ERRORS as e:
                    raise InvalidConfigError(f"invalid endpoint URL {self.url!r}: {e}") from e
                except TRANSIENT_ERRORS as e:
                    last_error = e
                    logger.warning("%s unreachable (attempt %d/%d): %s", self.url, attempt + 1, attempts, e)
                    continue
                except requests.RequestException as e:
                    raise EndpointUnreachableError(f"{self.url}: {e}") from e

                if response.status_code == 200:
                    try:
                        return response.json()["choices"][0]["message"]["content"]
                    except (ValueError, KeyError, IndexError, TypeError) as e:
                        raise EndpointError(200, f"malformed completion: {response.text[:200]}") from e

                error = EndpointError(response.status_code, response.text[:200])
                if response.status_code == 429 or response.status_code >= 500:
                    last_error = error
                    logger.warning("%s (attempt %d/%d)", error, attempt + 1, attempts)
                    continue
                raise error

        if isinstance(last_error, EndpointError):
            raise last_error
        raise EndpointUnreachableError(
            f"{self.url} unreachable after {attempts} attempt(s): {last_error}"
        )


class RuleTableStubClient:
    """Offline stand-in for the LLM: reads the parameter block and applies the rule table."""

    def __init__(self, rules: RuleTable | None = None):
        self.rules = rules or RuleTable()

    def complete(self, prompt: Prompt) -> str:
        text = prompt.render()
        begin = text.rfind(PARAMS_BEGIN)
        end = text.find(PARAMS_END, begin)
        if begin < 0 or end < 0:
            return "The prompt carries no radar parameters."
        fields = records.parse_record(text[begin + len(PARAMS_BEGIN) : end])
        params = EMParameters.from_record(fields)
        material, rule = self.rules.classify(params.epsilon_r, params.gamma_f, params.metal_like_flag)
        return f"Rule table: {rule}.\nMATERIAL: {material}"


def make_client(config: EndpointConfig, rules: RuleTable | None = None) -> CompletionClient:
    if config.base_url == STUB_RULE_TABLE_URL:
        return RuleTableStubClient(rules)
    if config.base_url.startswith("stub://"):
        raise InvalidConfigError(f"unknown stub endpoint {config.base_url}")
    return ChatClient(config)


def query_endpoint(
    prompt: Prompt,
    endpoint_config: EndpointConfig,
    client: CompletionClient | None = None,
) -> str:
    return (client or make_client(endpoint_config)).complete(prompt)


def _words(text: str) -> list[str]:
    return _WORD.findall(text.lower())


def _phrase_in(words: list[str], phrase: str) -> bool:
    target = phrase.split()
    return any(words[i : i + len(target)] == target for i in range(len(words) - len(target) + 1))


def canonical_class(label: str) -> MaterialClass:
    """Map a free-text material label onto a canonical class; unmatched labels are `other`."""
    words = _words(label)
    if not words:
        return "unknown"
    matches = {
        cls for cls, synonyms in SYNONYMS.items() if any(_phrase_in(words, s) for s in synonyms)
    }
    if len(matches) == 1:
        return matches.pop()
    if len(matches) > 1:
        # "glass-ceramic" and the like: the head noun decides
        for word in reversed(words):
            for cls in matches:
                if word in SYNONYMS[cls]:
                    return cls
    return "other"


def parse_verdict(raw: str | bytes | None) -> MaterialVerdict:
    """
    Read the verdict from an LLM answer.

    The last `MATERIAL:` line wins; without one, material words in the final
    paragraph outside `<think>` blocks decide. Never raises.
    """
    if raw is None:
        raw = ""
    if isinstance(raw, (bytes, bytearray)):
        raw = bytes(raw).decode("utf-8", errors="replace")
    text = _THINK.sub("", str(raw)).strip()

    markers = list(_MARKER.finditer(text))
    if markers:
        last = markers[-1]
        label = last.group(1).strip().strip("*_`\"'.").strip()
        rationale = text[: last.start()].strip()[-RATIONALE_LIMIT:]
        return MaterialVerdict(label=label, canonical_class=canonical_class(label), rationale=rationale)

    paragraphs = [p for p in re.split(r"\n\s*\n", text) if p.strip()]
    final = paragraphs[-1] if paragraphs else ""
    words = _words(final)
    found: dict[str, str] = {}
    for cls, synonyms in SYNONYMS.items():
        for synonym in synonyms:
            if _phrase_in(words, synonym):
                found.setdefault(cls, synonym)
    if len(found) == 1:
        cls, label = next(iter(found.items()))
        return MaterialVerdict(label=label, canonical_class=cls, rationale=text[-RATIONALE_LIMIT:])
    return MaterialVerdict(label="", canonical_class="unknown", rationale=text[-RATIONALE_LIMIT:])


def rule_based_classify(params: EMParameters, rules: RuleTable | None = None) -> MaterialVerdict:
    rules = rules or RuleTable()
    material, rule = rules.classify(params.epsilon_r, params.gamma_f, params.metal_like_flag)
    return MaterialVerdict(
        label=material,
        canonical_class=material,
        rationale=f"rule table: {rule}",
        mode="rule-based",
    )


def identify(
    params: EMParameters,
    index: KnowledgeIndex | None,
    endpoint_config: EndpointConfig | None,
    options: IdentifyOptions | None = None,
    *,
    embedder: Embedder | None = None,
    client: CompletionClient | None = None,
    rules: RuleTable | None = None,
) -> MaterialVerdict:
    options = options or IdentifyOptions()
    if not options.use_llm:
        return rule_based_classify(params, rules)

    hits: list[SearchHit] = []
    if options.with_rag:
        if index is None:
            raise InvalidConfigError("retrieval needs a knowledge index (or pass --no-rag)")
        hits = index.search(retrieval_query(params), options.k, embedder or HashedBowEmbedder())
    prompt = assemble_prompt(params, hits, options.with_rag)

    if client is None:
        client = make_client(endpoint_config or EndpointConfig(), rules)
    try:
        raw = client.complete(prompt)
    except RadarMatError as e:
        if not options.fallback_to_rules:
            raise
        logger.warning("endpoint failed (%s); falling back to the rule table", e)
        return rule_based_classify(params, rules)

    verdict = parse_verdict(raw)
    mode: VerdictMode = "llm+rag" if options.with_rag else "llm-only"
    sources = tuple(dict.fromkeys(hit.chunk.doc_id for hit in hits))
    logger.info("verdict %s (%s) via %s", verdict.label or "-", verdict.canonical_class, mode)
    return verdict.model_copy(update={"mode": mode, "sources": sources})
