"""Loading an :class:`AnalysisConfig` from a config directory and flags.

Directory layout (every file optional)::

    prompts.tsv       language<TAB>prompt line
    allowlist.txt     one best-practice URL prefix per line
    thresholds.cfg    "default <t>" and "<url> <t>" lines
    rules.jsonl       suppression rules, one JSON object per line
    summaries.jsonl   {"url": ..., "summary": ...} per line

``BPREVIEW_CONFIG_DIR`` names the directory when ``--config`` is absent.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, replace
from pathlib import Path

from bpreview.backend import (
    BEAM,
    COMMENT_SENTENCE_URL,
    FUNC_DOC_URL,
    GREEDY,
    LINE_LENGTH_URL,
    DecodeConfig,
    make_backend,
)
from bpreview.corpus import DEFAULT_PROMPTS, load_allowlist, load_prompt_table
from bpreview.pipeline import (
    AnalysisConfig,
    RuleStore,
    ThresholdTable,
    load_summaries,
)

CONFIG_ENV = "BPREVIEW_CONFIG_DIR"

DEFAULT_ALLOWLIST = (
    "https://go.dev/",
    "https://google.github.io/styleguide/",
    "https://github.com/google/styleguide/",
    "https://peps.python.org/",
    "https://abseil.io/tips/",
)

DEFAULT_SUMMARIES = {
    FUNC_DOC_URL: "Doc comments on exported functions begin with the function name.",
    COMMENT_SENTENCE_URL: "Comments documenting declarations are full sentences ending in a period.",
    LINE_LENGTH_URL: "Avoid very long lines; break them where it helps readability.",
}


@dataclass
class LoadedConfig:
    analysis: AnalysisConfig
    rule_store: RuleStore
    allowlist: tuple[str, ...]
    sources: dict[str, str]

    def current(self) -> AnalysisConfig:
        """Analysis config with the latest suppression rules swapped in."""
        rules = self.rule_store.rules()
        if rules is self.analysis.rules:
            return self.analysis
        return replace(self.analysis, rules=rules)

    def fingerprint(self) -> str:
        cfg = self.current()
        h = hashlib.sha256()
        h.update(cfg.thresholds.dumps().encode())
        for lang, prompt in sorted(cfg.prompt_table.items()):
            h.update(f"{lang}\t{prompt}\n".encode())
        for url, summary in sorted(cfg.summaries.items()):
            h.update(f"{url}\t{summary}\n".encode())
        for rule in cfg.rules:
            h.update(repr((rule.url_pattern, rule.source_pattern, rule.path_glob,
                           rule.reason, rule.active, rule.whole_file)).encode())
        h.update(f"{cfg.decode}|{cfg.budget}".encode())
        return h.hexdigest()[:16]


def resolve_config_dir(config_dir: str | None) -> Path | None:
    d = config_dir or os.environ.get(CONFIG_ENV)
    return Path(d) if d else None


def load_config(
    config_dir: str | None = None,
    *,
    backend: str = "reference",
    strategy: str = GREEDY,
    beam_width: int = 4,
    thresholds: str | None = None,
    rules: str | None = None,
    summaries: str | None = None,
    budget: int | None = None,
) -> LoadedConfig:
    """Build a complete config; any malformed file raises before anything is served."""
    base = resolve_config_dir(config_dir)

    def pick(explicit: str | None, name: str) -> Path | None:
        if explicit:
            p = Path(explicit)
            if not p.exists():
                raise FileNotFoundError(f"config file not found: {p}")
            return p
        if base is not None and (base / name).exists():
            return base / name
        return None

    sources: dict[str, str] = {}
    prompts_path = pick(None, "prompts.tsv")
    prompt_table = dict(DEFAULT_PROMPTS)
    if prompts_path:
        prompt_table.update(load_prompt_table(prompts_path))
        sources["prompts"] = str(prompts_path)

    allow_path = pick(None, "allowlist.txt")
    allowlist = tuple(load_allowlist(allow_path)) if allow_path else DEFAULT_ALLOWLIST

    th_path = pick(thresholds, "thresholds.cfg")
    table = ThresholdTable.load(th_path) if th_path else ThresholdTable()
    if th_path:
        sources["thresholds"] = str(th_path)

    rules_path = pick(rules, "rules.jsonl")
    store = RuleStore(rules_path) if rules_path else RuleStore()
    if rules_path:
        sources["rules"] = str(rules_path)

    sum_path = pick(summaries, "summaries.jsonl")
    summary_table = load_summaries(sum_path) if sum_path else dict(DEFAULT_SUMMARIES)
    if sum_path:
        sources["summaries"] = str(sum_path)

    if strategy not in (GREEDY, BEAM):
        raise ValueError(f"unknown strategy {strategy!r}")
    analysis = AnalysisConfig(
        backend=make_backend(backend),
        prompt_table=prompt_table,
        budget=budget or AnalysisConfig.budget,
        decode=DecodeConfig(strategy, beam_width),
        thresholds=table,
        rules=store.rules(),
        summaries=summary_table,
    )
    return LoadedConfig(analysis, store, allowlist, sources)
