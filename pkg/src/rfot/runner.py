"""Experiment runner: dataset x strategy x backend, with reproducible reports."""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from .baselines import Outcome, StrategyConfig, cot_predict, io_predict, sc_cot_predict, tot_predict
from .errors import ConfigError, GenerationError, PredictionError, TransportError
from .forest import ForestConfig, LabelContext
from .icot import ICoTConfig
from .llm import Cassette, Completion, HTTPBackend, LLMBackend, PromptRequest, RecordingBackend, ReplayBackend
from .metrics import ReportRow, SampleOutcome, evaluate, render_table, rows_to_csv
from .pipeline import RFoTConfig, RFoTResult, record_seed, rfot_predict
from .survey import Dataset, SurveyRecord, load_dataset

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

logger = logging.getLogger(__name__)

ALL_STRATEGIES = ("io", "cot", "sc_cot", "tot", "rfot")
DISPLAY_NAMES = {
    "io": "I/O Prompt",
    "finetune": "Fine Tuning",
    "cot": "CoT",
    "sc_cot": "SC-CoT",
    "tot": "ToT",
    "rfot": "RFoT",
}
# row order of the results table; fine-tuning is listed but never run
TABLE_ORDER = ("io", "finetune", "cot", "sc_cot", "tot", "rfot")
BUILTIN = "synthetic"


def builtin_path(name: str) -> Path:
    return Path(str(resources.files("rfot").joinpath("data", name)))


@dataclass
class RunConfig:
    dataset: str = ""
    strategies: list[str] = field(default_factory=lambda: ["rfot"])
    seed: int = 0
    samples: int = 100
    out: str = "runs/latest"
    jobs: int = 1
    backend_url: str | None = None
    model: str | None = None
    api_key: str | None = None
    timeout: float = 60.0
    cassette: str | None = None
    record: bool = False
    llm_name: str | None = None
    n_trees: int = 5
    k: int = 8
    mode: str = "majority_vote"
    max_keywords: int = 3
    exact_limit: int = 12
    mc_samples: int = 32
    n_chains: int = 5
    breadth: int = 3
    depth: int = 2

    def validate(self) -> "RunConfig":
        if not self.dataset:
            raise ConfigError("no dataset given")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        unknown = [s for s in self.strategies if s not in ALL_STRATEGIES]
        if unknown or not self.strategies:
            raise ConfigError(f"unknown strategies {unknown}; choose from {', '.join(ALL_STRATEGIES)}")
        if self.record:
            if not (self.backend_url and self.cassette):
                raise ConfigError("recording needs both a backend URL and a cassette path")
        elif bool(self.backend_url) == bool(self.cassette):
            raise ConfigError("select exactly one backend: a live URL or a cassette to replay")
        try:
            self.rfot_config()
            for s in ("sc_cot", "tot"):
                self.strategy_config(s)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    @property
    def mode_name(self) -> str:
        if self.record:
            return "record"
        return "replay" if self.cassette else "live"

    def rfot_config(self) -> RFoTConfig:
        return RFoTConfig(
            icot=ICoTConfig(max_keywords=self.max_keywords),
            forest=ForestConfig(n_trees=self.n_trees, k=self.k, mode=self.mode),
            exact_limit=self.exact_limit,
            mc_samples=self.mc_samples,
        )

    def strategy_config(self, strategy: str) -> StrategyConfig:
        return StrategyConfig(strategy, n_chains=self.n_chains, breadth=self.breadth, depth=self.depth)

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "RunConfig":
        """Read a TOML config; sections flatten into fields, overrides win."""
        path = Path(path)
        try:
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        flat: dict = {}
        for key, value in raw.items():
            if isinstance(value, dict):
                for sub, v in value.items():
                    flat[_SECTION_KEYS.get((key, sub), sub)] = v
            else:
                flat[key] = value
        known = set(cls.__dataclass_fields__)
        bad = sorted(set(flat) - known)
        if bad:
            raise ConfigError(f"unknown config keys: {', '.join(bad)}")
        base = path.parent
        for key in ("dataset", "cassette", "out"):
            if flat.get(key) and flat[key] != BUILTIN and not Path(flat[key]).is_absolute():
                flat[key] = str(base / flat[key])
        flat.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**flat)


_SECTION_KEYS = {
    ("backend", "url"): "backend_url",
    ("rfot", "M"): "n_trees",
    ("rfot", "trees"): "n_trees",
    ("sc_cot", "chains"): "n_chains",
}


class MeteredBackend:
    """Per-record view of a backend that totals reported latency."""

    def __init__(self, inner: LLMBackend):
        self.inner = inner
        self.backend_id = inner.backend_id
        self.latency = 0.0
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, req: PromptRequest) -> Completion:
        completion = self.inner.complete(req)
        with self._lock:
            self.latency += completion.latency
            self.calls += 1
        return completion


def select_samples(ds: Dataset, limit: int, seed: int) -> list[SurveyRecord]:
    """Seeded shuffle within each label, then round-robin across labels."""
    rng = np.random.default_rng([seed, 7])
    groups: dict[int, list[SurveyRecord]] = {}
    for record in ds.records:
        groups.setdefault(int(record.label), []).append(record)
    queues = []
    for label in sorted(groups):
        members = groups[label]
        queues.append([members[i] for i in rng.permutation(len(members))])
    picked: list[SurveyRecord] = []
    while len(picked) < limit and any(queues):
        for q in queues:
            if q and len(picked) < limit:
                picked.append(q.pop(0))
    return picked


def _strategy_fn(strategy: str, config: RunConfig, ds: Dataset) -> Callable[[SurveyRecord, LLMBackend], Outcome]:
    if strategy == "io":
        return lambda r, llm: io_predict(r, llm)
    if strategy == "cot":
        return lambda r, llm: cot_predict(r, llm)
    if strategy == "sc_cot":
        sc = config.strategy_config("sc_cot")
        return lambda r, llm: sc_cot_predict(
            r, llm, rng=np.random.default_rng([record_seed(config.seed, r.record_id), 2]), config=sc
        )
    if strategy == "tot":
        tc = config.strategy_config("tot")
        return lambda r, llm: tot_predict(
            r, llm, rng=np.random.default_rng([record_seed(config.seed, r.record_id), 3]), config=tc
        )
    rc = config.rfot_config()

    def run_rfot(r: SurveyRecord, llm: LLMBackend) -> Outcome:
        context = LabelContext([x for x in ds.records if x.record_id != r.record_id])
        return rfot_predict(r, llm, rc, seed=config.seed, context=context)

    return run_rfot


def _trace(strategy: str, record: SurveyRecord, outcome: Outcome | None, error: str | None,
           runtime: float, consistency: float) -> dict:
    line = {
        "strategy": strategy,
        "record_id": record.record_id,
        "truth": int(record.label),
        "pred": int(outcome.label) if outcome else None,
        "runtime": runtime,
        "consistency": consistency,
        "error": error,
    }
    if isinstance(outcome, RFoTResult):
        line["thoughts"] = [t.to_dict() for t in outcome.candidates.thoughts]
        line["generation_log"] = outcome.candidates.to_dict()["generation_log"]
        line["importance"] = json.loads(outcome.importance.to_json())
        line["value_calls"] = outcome.value_calls
        line["per_tree"] = [[i, int(lab) if lab is not None else None] for i, lab in outcome.prediction.per_tree]
        line["trees"] = [
            {"tree": t["tree"], "prompt": t["prompt"], "completion": t["completion"], "label": t["label"]}
            for t in outcome.prediction.trace
        ]
    elif outcome is not None:
        line["calls"] = [
            {"template": c["template"], "prompt": c["prompt"], "completion": c["completion"]}
            for c in outcome.calls
        ]
    return line


@dataclass
class RunResult:
    rows: list[ReportRow]
    traces: list[dict]
    out_dir: Path
    backend: LLMBackend


def make_backend(config: RunConfig) -> LLMBackend:
    if config.mode_name == "replay":
        path = builtin_path("synthetic_happiness.cassette.json") if config.cassette == BUILTIN else config.cassette
        return ReplayBackend(Cassette.load(path))
    live = HTTPBackend(url=config.backend_url, model=config.model or "llama3",
                       api_key=config.api_key, timeout=config.timeout)
    live.check_reachable()
    if config.mode_name == "live":
        return live
    path = Path(config.cassette)
    cassette = Cassette.load(path) if path.exists() else Cassette()
    return RecordingBackend(live, cassette, path)


def resume_marker_path(cassette: str | Path) -> Path:
    cassette = Path(cassette)
    return cassette.with_name(cassette.name + ".resume.json")


def run(config: RunConfig, backend: LLMBackend | None = None) -> RunResult:
    config.validate()
    dataset_path = builtin_path("synthetic_happiness.jsonl") if config.dataset == BUILTIN else config.dataset
    ds = load_dataset(dataset_path)
    records = select_samples(ds, config.samples, config.seed)
    backend = backend or make_backend(config)
    llm_name = config.llm_name or config.model or ("replay" if config.mode_name == "replay" else backend.backend_id)

    traces: list[dict] = []
    results: dict[str, list[SampleOutcome]] = {}
    pool = ThreadPoolExecutor(max_workers=config.jobs) if config.jobs > 1 else None
    try:
        for strategy in config.strategies:
            fn = _strategy_fn(strategy, config, ds)

            def one(record: SurveyRecord):
                metered = MeteredBackend(backend)
                outcome, error = None, None
                try:
                    outcome = fn(record, metered)
                except (PredictionError, GenerationError) as exc:
                    error = str(exc)
                consistency = outcome.consistency if outcome else 0.0
                sample = SampleOutcome(
                    pred=int(outcome.label) if outcome else None,
                    truth=int(record.label),
                    runtime=metered.latency,
                    consistency=consistency,
                )
                return sample, _trace(strategy, record, outcome, error, metered.latency, consistency), outcome

            done = list(pool.map(one, records)) if pool else [one(r) for r in records]
            results[strategy] = [d[0] for d in done]
            traces.extend(d[1] for d in done)
            if strategy == "rfot":
                _dump_forests(Path(config.out), done)
    except TransportError as exc:
        if isinstance(backend, RecordingBackend):
            backend.save()
            marker = resume_marker_path(backend.path)
            marker.write_text(json.dumps({"error": str(exc), "recorded": len(backend.cassette)}) + "\n")
        raise
    finally:
        if pool:
            pool.shutdown()
    if isinstance(backend, RecordingBackend) and backend.path is not None:
        backend.save()
        resume_marker_path(backend.path).unlink(missing_ok=True)

    rows = []
    for key in TABLE_ORDER:
        if key == "finetune":
            rows.append(ReportRow(ds.name, llm_name, DISPLAY_NAMES[key], None))
        elif key in results:
            rows.append(ReportRow(ds.name, llm_name, DISPLAY_NAMES[key], evaluate(results[key])))
    write_report(Path(config.out), rows, traces)
    return RunResult(rows, traces, Path(config.out), backend)


def _dump_forests(out: Path, done) -> None:
    forest_dir = out / "forests"
    forest_dir.mkdir(parents=True, exist_ok=True)
    for _, trace, outcome in done:
        if isinstance(outcome, RFoTResult):
            (forest_dir / f"{trace['record_id']}.json").write_text(outcome.forest.to_json() + "\n", encoding="utf-8")


def write_report(out: Path, rows: list[ReportRow], traces: list[dict]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(rows_to_csv(rows), encoding="utf-8")
    (out / "results.txt").write_text(render_table(rows), encoding="utf-8")
    with (out / "traces.jsonl").open("w", encoding="utf-8") as fh:
        for line in traces:
            fh.write(json.dumps(line, sort_keys=True, ensure_ascii=False) + "\n")
