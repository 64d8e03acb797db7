"""One JSON document holding every pipeline parameter.

Sections mirror the stages. Unknown keys are rejected at every level so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from .cluster import ClusterParams
from .decode import DEFAULT_WEIGHTS
from .evaluation import ALL_SCHEMES, ExperimentParams
from .labels import LabelConfig
from .priors import DEFAULT_BLOCKLIST, ExtractorConfig
from .textutil import read_word_list


class ConfigError(ValueError):
    pass


@dataclass
class PathsSection:
    corpus: Optional[str] = None
    queries: Optional[str] = None
    embeddings: Optional[str] = None
    workdir: str = "work"
    stopwords: Optional[str] = None
    blocklist: Optional[str] = None
    replay: Optional[str] = None


@dataclass
class EmbedSection:
    dim: int = 256


@dataclass
class ClusterSection:
    k: int = 30
    c: int = 30
    max_iters: int = 50


@dataclass
class ExtractSection:
    strategy: str = "category"
    fields: List[str] = field(default_factory=lambda: ["categories", "tags"])
    max_keywords_per_doc: int = 16


@dataclass
class LabelSection:
    K: int = 3
    intra_sep: str = "-"
    level_sep: str = "-"
    ancestor_dedup: bool = False


@dataclass
class DecodeSection:
    tokenizer_mode: str = "word"
    alpha: float = 0.1
    weights: List[float] = field(default_factory=lambda: list(DEFAULT_WEIGHTS))
    beam_width: int = 20
    length_norm: bool = False


@dataclass
class EvalSection:
    schemes: List[str] = field(default_factory=lambda: list(ALL_SCHEMES))
    mode: str = "supervised"
    test_fraction: float = 0.2
    smooth: bool = True


_SECTIONS = {
    "paths": PathsSection,
    "embed": EmbedSection,
    "cluster": ClusterSection,
    "extract": ExtractSection,
    "label": LabelSection,
    "decode": DecodeSection,
    "eval": EvalSection,
}


@dataclass
class PipelineConfig:
    seed: int = 7
    paths: PathsSection = field(default_factory=PathsSection)
    embed: EmbedSection = field(default_factory=EmbedSection)
    cluster: ClusterSection = field(default_factory=ClusterSection)
    extract: ExtractSection = field(default_factory=ExtractSection)
    label: LabelSection = field(default_factory=LabelSection)
    decode: DecodeSection = field(default_factory=DecodeSection)
    eval: EvalSection = field(default_factory=EvalSection)
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    @classmethod
    def from_dict(cls, raw: Dict[str, Any], base_dir: Path = Path(".")) -> "PipelineConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(raw) - set(_SECTIONS) - {"seed"})
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]!r}")
        kwargs: Dict[str, Any] = {"base_dir": Path(base_dir)}
        if "seed" in raw:
            kwargs["seed"] = raw["seed"]
        for name, section in _SECTIONS.items():
            kwargs[name] = _load_section(section, raw.get(name, {}), name)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        return cls.from_dict(raw, path.parent)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"seed": self.seed}
        for name in _SECTIONS:
            out[name] = dataclasses.asdict(getattr(self, name))
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def with_seed(self, seed: Optional[int]) -> "PipelineConfig":
        if seed is None:
            return self
        new = dataclasses.replace(self, seed=seed)
        new.validate()
        return new

    def validate(self) -> None:
        try:
            self._check()
        except TypeError as exc:
            raise ConfigError(f"config value has the wrong type: {exc}") from None

    def _check(self) -> None:
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        bad = [s for s in self.eval.schemes if s not in ALL_SCHEMES]
        if bad:
            raise ConfigError(f"unknown scheme {bad[0]!r}; choose from {', '.join(ALL_SCHEMES)}")
        if self.eval.mode not in ("supervised", "zero_shot"):
            raise ConfigError(f"unknown eval mode {self.eval.mode!r}")
        if self.decode.tokenizer_mode not in ("word", "segment"):
            raise ConfigError(f"unknown tokenizer mode {self.decode.tokenizer_mode!r}")
        if self.decode.beam_width < 1:
            raise ConfigError("decode.beam_width must be >= 1")
        if self.decode.alpha < 0:
            raise ConfigError("decode.alpha must be non-negative")
        if len(self.decode.weights) != len(DEFAULT_WEIGHTS) or any(w < 0 for w in self.decode.weights) \
                or sum(self.decode.weights) <= 0:
            raise ConfigError(f"decode.weights must be {len(DEFAULT_WEIGHTS)} non-negative numbers, not all zero")
        if not 0 < self.eval.test_fraction < 1:
            raise ConfigError("eval.test_fraction must be in (0, 1)")
        if self.embed.dim < 2:
            raise ConfigError("embed.dim must be >= 2")
        if "c2t_smoothed" in self.eval.schemes and not self.eval.smooth:
            raise ConfigError("scheme c2t_smoothed needs eval.smooth = true")
        # building the typed params runs every module's own checks
        try:
            self.params()
        except (ValueError, TypeError, OSError) as exc:
            raise ConfigError(str(exc)) from None

    def resolve(self, value: Optional[str]) -> Optional[Path]:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def workdir(self) -> Path:
        return self.resolve(self.paths.workdir)

    def extractor(self) -> ExtractorConfig:
        stop = read_word_list(self.resolve(self.paths.stopwords)) if self.paths.stopwords else frozenset()
        block = read_word_list(self.resolve(self.paths.blocklist)) if self.paths.blocklist else DEFAULT_BLOCKLIST
        return ExtractorConfig(
            strategy=self.extract.strategy,
            fields=tuple(self.extract.fields),
            blocklist=frozenset(block),
            stopwords=frozenset(stop),
            max_keywords_per_doc=self.extract.max_keywords_per_doc,
        )

    def params(self) -> ExperimentParams:
        return ExperimentParams(
            seed=self.seed,
            dim=self.embed.dim,
            cluster=ClusterParams(k=self.cluster.k, c=self.cluster.c, seed=self.seed, max_iters=self.cluster.max_iters),
            extractor=self.extractor(),
            label=LabelConfig(**dataclasses.asdict(self.label)),
            tokenizer_mode=self.decode.tokenizer_mode,
            alpha=self.decode.alpha,
            weights=tuple(self.decode.weights),
            beam_width=self.decode.beam_width,
            length_norm=self.decode.length_norm,
            test_fraction=self.eval.test_fraction,
        )


def _load_section(section, raw: Any, name: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    known = {f.name for f in dataclasses.fields(section)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config key {name}.{unknown[0]}")
    return section(**raw)


def default_config() -> PipelineConfig:
    return PipelineConfig()


def scheme_list(value: str) -> Tuple[str, ...]:
    names = tuple(s.strip() for s in value.split(",") if s.strip())
    bad = [s for s in names if s not in ALL_SCHEMES]
    if bad or not names:
        raise ConfigError(f"unknown scheme {bad[0] if bad else value!r}")
    return names
