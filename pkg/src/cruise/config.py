"""YAML configuration: store location, trackers, backends, sampling,
review settings. Relative paths resolve against the config file's
directory so a config travels with its fixtures.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .gateway import (
    BackendConfig,
    ChatBackend,
    FixtureChatBackend,
    HttpChatBackend,
    MockChatBackend,
    MockRule,
    RecordingChatBackend,
)
from .ingest import DEFAULT_EXCLUDED_LABELS, HarvestFilter, TrackerSource
from .models import SampleSpec
from .pipeline import FixtureTranslator, Translator
from .preprocess import (
    DEFAULT_SECTION_DROP,
    RemoteTriviaScorer,
    RuleTriviaScorer,
    TriviaScorer,
)
from .store import Store

RECORD_ENV_VAR = "CRUISE_LLM_RECORD"

BACKEND_KINDS = ("http", "mock", "fixture")


class ConfigError(ValueError):
    pass


def _as_str(value: Any, key: str) -> str:
    if not isinstance(value, str) or not value.strip():
        raise ConfigError(f"{key} must be a non-empty string")
    return value.strip()


def _reply_text(value: Any) -> str:
    # YAML reads an unquoted yes/no as a boolean; accept both spellings
    if isinstance(value, bool):
        return "yes" if value else "no"
    return str(value)


@dataclass(frozen=True)
class BackendSpec:
    kind: str
    config: BackendConfig
    rules: tuple[MockRule, ...] = ()
    default_reply: str = "no"
    directory: Path | None = None
    record_endpoint: str | None = None

    def build(self) -> ChatBackend:
        recording = os.environ.get(RECORD_ENV_VAR) == "1"
        if self.kind == "mock":
            return MockChatBackend(self.config.name, self.rules, self.default_reply)
        if self.kind == "fixture":
            if self.directory is None:
                raise ConfigError(f"backend {self.config.name!r}: fixture kind needs dir")
            if recording:
                endpoint = self.record_endpoint or self.config.endpoint
                if not endpoint:
                    raise ConfigError(
                        f"backend {self.config.name!r}: {RECORD_ENV_VAR}=1 needs an endpoint"
                    )
                live = HttpChatBackend(replace(self.config, endpoint=endpoint))
                return RecordingChatBackend(live, self.directory)
            return FixtureChatBackend(self.config.name, self.directory)
        live = HttpChatBackend(self.config)
        if recording and self.directory is not None:
            return RecordingChatBackend(live, self.directory)
        return live


@dataclass
class AppConfig:
    base_dir: Path
    store_dir: Path
    domain_description: str
    trackers: list[TrackerSource]
    harvest_filter: HarvestFilter
    section_drop: tuple[str, ...]
    trivia_mode: str
    trivia_url: str | None
    trivia_threshold: float
    trivia_timeout_s: float
    trivia_patterns: tuple[str, ...] | None
    ensemble: list[BackendSpec]
    generator: BackendSpec
    assessor: BackendSpec
    sample: SampleSpec
    threshold_m: int
    panel_n: int
    ui_dir: Path | None
    translator_mapping: dict[str, str] | None

    def build_store(self) -> Store:
        return Store(self.store_dir)

    def build_ensemble(self) -> list[ChatBackend]:
        return [spec.build() for spec in self.ensemble]

    def build_generator(self) -> ChatBackend:
        return self.generator.build()

    def build_assessor(self) -> ChatBackend:
        return self.assessor.build()

    def build_trivia_scorer(self) -> TriviaScorer:
        if self.trivia_mode == "remote":
            return RemoteTriviaScorer(
                self.trivia_url, self.trivia_threshold, self.trivia_timeout_s
            )
        return RuleTriviaScorer(self.trivia_patterns)

    def build_translator(self) -> Translator | None:
        if self.translator_mapping is None:
            return None
        return FixtureTranslator(self.translator_mapping)


def _parse_backend(entry: Any, key: str, base_dir: Path, default_reply: str = "no") -> BackendSpec:
    if not isinstance(entry, dict):
        raise ConfigError(f"{key} must be a mapping")
    name = _as_str(entry.get("name"), f"{key}.name")
    kind = entry.get("kind", "http")
    if kind not in BACKEND_KINDS:
        raise ConfigError(f"{key}.kind must be one of {BACKEND_KINDS}, got {kind!r}")
    try:
        config = BackendConfig(
            name=name,
            endpoint=str(entry.get("endpoint", "") or ""),
            temperature=float(entry.get("temperature", 0.0)),
            max_inflight=int(entry.get("max_inflight", 1)),
            timeout_s=int(entry.get("timeout_s", 60)),
            retry_limit=int(entry.get("retry_limit", 2)),
        )
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}")
    rules = []
    for index, rule in enumerate(entry.get("rules", []) or []):
        if not isinstance(rule, dict) or "contains" not in rule or "reply" not in rule:
            raise ConfigError(f"{key}.rules[{index}] needs 'contains' and 'reply'")
        rules.append(MockRule(str(rule["contains"]), _reply_text(rule["reply"])))
    directory = entry.get("dir")
    return BackendSpec(
        kind=kind,
        config=config,
        rules=tuple(rules),
        default_reply=_reply_text(entry.get("default_reply", default_reply)),
        directory=(base_dir / directory).resolve() if directory else None,
        record_endpoint=entry.get("record_endpoint"),
    )


def load_config(path: str | Path) -> AppConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text("utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    base_dir = path.resolve().parent

    store_dir = (base_dir / str(raw.get("store_dir", "store"))).resolve()
    domain = _as_str(raw.get("domain_description", "software product"), "domain_description")

    trackers: list[TrackerSource] = []
    for index, entry in enumerate(raw.get("trackers", []) or []):
        if not isinstance(entry, dict):
            raise ConfigError(f"trackers[{index}] must be a mapping")
        base_url = _as_str(entry.get("base_url"), f"trackers[{index}].base_url")
        api_kind = entry.get("api_kind", "github_rest")
        if api_kind == "generic_rest_fixture" and "://" not in base_url:
            base_url = str((base_dir / base_url).resolve())
        try:
            trackers.append(
                TrackerSource(
                    name=_as_str(entry.get("name"), f"trackers[{index}].name"),
                    base_url=base_url,
                    api_kind=api_kind,
                    auth_token=entry.get("auth_token"),
                    page_size=int(entry.get("page_size", 100)),
                )
            )
        except ValueError as exc:
            raise ConfigError(f"trackers[{index}]: {exc}")
    names = [t.name for t in trackers]
    if len(set(names)) != len(names):
        raise ConfigError("tracker names must be unique")

    harvest = raw.get("harvest", {}) or {}
    excluded = harvest.get("excluded_labels")
    harvest_filter = HarvestFilter(
        required_state=str(harvest.get("required_state", "closed")),
        excluded_labels=(
            frozenset(str(label) for label in excluded)
            if excluded is not None
            else DEFAULT_EXCLUDED_LABELS
        ),
    )

    pre = raw.get("preprocess", {}) or {}
    section_drop = tuple(
        str(s) for s in (pre.get("section_drop") or DEFAULT_SECTION_DROP)
    )
    trivia = pre.get("trivia", {}) or {}
    trivia_mode = trivia.get("mode", "rule")
    if trivia_mode not in ("rule", "remote"):
        raise ConfigError(f"preprocess.trivia.mode must be rule or remote, got {trivia_mode!r}")
    trivia_url = trivia.get("url")
    if trivia_mode == "remote" and not trivia_url:
        raise ConfigError("preprocess.trivia.url required for remote mode")
    patterns = trivia.get("patterns")
    trivia_patterns = tuple(str(p) for p in patterns) if patterns is not None else None

    backends_raw = raw.get("backends") or []
    if not isinstance(backends_raw, list) or not backends_raw:
        raise ConfigError("backends must be a non-empty list (the matching ensemble)")
    ensemble = [
        _parse_backend(entry, f"backends[{index}]", base_dir)
        for index, entry in enumerate(backends_raw)
    ]
    ensemble_names = [spec.config.name for spec in ensemble]
    if len(set(ensemble_names)) != len(ensemble_names):
        raise ConfigError("backend names must be unique")
    if "generator" not in raw:
        raise ConfigError("a generator backend is required")
    if "assessor" not in raw:
        raise ConfigError("an assessor backend is required")
    generator = _parse_backend(raw["generator"], "generator", base_dir)
    assessor = _parse_backend(raw["assessor"], "assessor", base_dir)

    sampling = raw.get("sampling", {}) or {}
    try:
        sample_spec = SampleSpec(
            seed=int(sampling.get("seed", 0)),
            story_count=(
                None if sampling.get("story_count") is None else int(sampling["story_count"])
            ),
            issue_count=(
                None if sampling.get("issue_count") is None else int(sampling["issue_count"])
            ),
            criteria_per_story_cap=int(sampling.get("criteria_per_story_cap", 10)),
        )
    except ValueError as exc:
        raise ConfigError(f"sampling: {exc}")

    review = raw.get("review", {}) or {}
    threshold_m = int(review.get("threshold_m", 3))
    panel_n = int(review.get("panel_n", 4))
    if threshold_m < 1 or threshold_m > panel_n:
        raise ConfigError("review.threshold_m must satisfy 1 <= m <= panel_n")
    ui_dir = review.get("ui_dir")

    translator = raw.get("translator", {}) or {}
    mapping: dict[str, str] | None = None
    if "mapping" in translator:
        mapping = {str(k): str(v) for k, v in (translator["mapping"] or {}).items()}
    elif "mapping_file" in translator:
        mapping_path = base_dir / str(translator["mapping_file"])
        try:
            mapping = {
                str(k): str(v)
                for k, v in json.loads(mapping_path.read_text("utf-8")).items()
            }
        except (OSError, ValueError) as exc:
            raise ConfigError(f"translator.mapping_file: {exc}")

    return AppConfig(
        base_dir=base_dir,
        store_dir=store_dir,
        domain_description=domain,
        trackers=trackers,
        harvest_filter=harvest_filter,
        section_drop=section_drop,
        trivia_mode=trivia_mode,
        trivia_url=trivia_url,
        trivia_threshold=float(trivia.get("threshold", 0.5)),
        trivia_timeout_s=float(trivia.get("timeout_s", 10.0)),
        trivia_patterns=trivia_patterns,
        ensemble=ensemble,
        generator=generator,
        assessor=assessor,
        sample=sample_spec,
        threshold_m=threshold_m,
        panel_n=panel_n,
        ui_dir=(base_dir / str(ui_dir)).resolve() if ui_dir else None,
        translator_mapping=mapping,
    )
