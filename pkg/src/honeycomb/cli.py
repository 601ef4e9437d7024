"""Command-line interface.

Exit codes: 0 on success, 1 for operational failures (bad data, provider or
tool errors), 2 for usage errors. Diagnostics go to stderr; stdout carries
only command output, deterministically ordered so runs with fixed inputs
compare byte for byte.
"""

from __future__ import annotations

import contextlib
import json
import logging
import sys
from pathlib import Path

import click

from . import itc as itc_mod
from .agent import AblationConfig, Agent, serialize_trace
from .compute_client import ComputeClient
from .config import Settings, resolve_settings
from .errors import HoneycombError
from .eval_harness import (
    EvalAborted,
    EvalReport,
    ablation_table,
    ablation_table_from_reports,
    load_dataset,
    render_ablation_table,
    run_eval,
)
from .general_tools import LiveTransport, ReplayTransport, register_general_tools
from .knowledge_base import (
    ROOT_LABEL,
    KbEntry,
    KnowledgeBase,
    SourceKind,
    stats_from_manifest,
)
from .llm_gateway import Gateway, make_provider
from .retriever import HashEmbedder, RemoteEmbedder, Retriever
from .tool_hub import ToolRegistry, load_registry_file

log = logging.getLogger(__name__)


@contextlib.contextmanager
def _operational():
    try:
        yield
    except EvalAborted as exc:
        click.echo(f"error: {exc}", err=True)
        click.echo(f"partial report covers {exc.report.n} questions", err=True)
        sys.exit(1)
    except HoneycombError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


def _settings(ctx: click.Context) -> Settings:
    params = ctx.obj
    overrides = {
        "provider": params.get("provider"),
        "kb.store": params.get("kb"),
        "ablation": params.get("ablation"),
        "seed": params.get("seed"),
    }
    return resolve_settings(params.get("config"), overrides)


def _load_kb(settings: Settings) -> KnowledgeBase:
    store = str(settings["kb.store"])
    if not store:
        return KnowledgeBase()
    if Path(store).exists():
        return KnowledgeBase.load(store)
    return KnowledgeBase()


def _embedder(settings: Settings):
    endpoint = str(settings["embedding.endpoint"])
    if endpoint:
        return RemoteEmbedder(endpoint, dim=settings["embedding.dim"])
    return HashEmbedder(dim=settings["embedding.dim"])


def _transport(settings: Settings):
    cassette_dir = str(settings["tools.cassette_dir"])
    if str(settings["tools.mode"]) == "replay":
        if not cassette_dir:
            raise HoneycombError(
                "tools.mode is replay but tools.cassette_dir is unset")
        return ReplayTransport(cassette_dir)
    return LiveTransport()


def _build_agent(settings: Settings, stack: contextlib.ExitStack,
                 need_tools: bool) -> tuple[Agent, Gateway]:
    kb = _load_kb(settings)
    registry = ToolRegistry(default_timeout=float(settings["tools.timeout"]))
    if need_tools:
        compute = None
        worker_cmd = settings.worker_cmd()
        if worker_cmd:
            compute = stack.enter_context(ComputeClient(worker_cmd))
        register_general_tools(registry, _transport(settings), compute)
        registry_file = None
        # Domain atomics ride along when a registry file sits in the KB store.
        store = str(settings["kb.store"])
        if store:
            candidate = Path(store) / "registry.jsonl"
            if candidate.exists():
                registry_file = candidate
        if registry_file and compute is not None:
            for spec in load_registry_file(registry_file):
                registry.register_tool(
                    spec, _atomic_handler(compute, spec.name))
    provider = make_provider(str(settings["provider"]),
                             str(settings["llm.cassette_dir"]) or None)
    gateway = Gateway(provider, temperature=float(settings["llm.temperature"]),
                      max_output_tokens=int(settings["llm.max_output_tokens"]))
    retriever = Retriever(_embedder(settings), settings.retriever_config())
    if len(kb):
        retriever.build_kb_index(kb.snapshot().values())
    if need_tools and len(registry):
        retriever.build_tool_index(registry.tool_index_docs())
    agent = Agent(gateway, registry, retriever, kb, settings.agent_config())
    return agent, gateway


def _atomic_handler(compute: ComputeClient, name: str):
    from .tool_hub import ToolResult

    def handler(args: dict) -> ToolResult:
        response = compute.call_atomic(name, args)
        if response.status == "ok":
            return ToolResult.ok(str(response.result))
        if response.status == "timeout":
            return ToolResult.timed_out(response.diagnostics or "atomic timed out")
        return ToolResult.error(response.diagnostics or "atomic call failed")
    return handler


@click.group()
@click.option("--config", type=click.Path(exists=True, dir_okay=False),
              default=None, help="YAML config file.")
@click.option("--provider", default=None,
              help="remote, scripted:<path>, or replay:<dir>.")
@click.option("--kb", default=None, type=click.Path(),
              help="Knowledge-base store directory.")
@click.option("--ablation", default=None,
              help="Enabled retrieval sources: kb,tools | kb | tools | none.")
@click.option("--seed", default=None, type=int, help="Random seed.")
@click.pass_context
def main(ctx, config, provider, kb, ablation, seed):
    """Retrieval-augmented agent for materials-science question answering."""
    ctx.obj = {"config": config, "provider": provider, "kb": kb,
               "ablation": ablation, "seed": seed}


# -- kb ---------------------------------------------------------------------

@main.group("kb")
def kb_group():
    """Knowledge-base management."""


def _open_store(settings: Settings, must_exist: bool) -> tuple[KnowledgeBase, str]:
    store = str(settings["kb.store"])
    if not store:
        raise HoneycombError("no KB store given; pass --kb or set kb.store")
    if Path(store).exists():
        return KnowledgeBase.load(store), store
    if must_exist:
        raise HoneycombError(f"KB store {store} does not exist")
    return KnowledgeBase(), store


@kb_group.command("import")
@click.argument("corpus", type=click.Path(exists=True, dir_okay=False))
@click.option("--source-kind", default=None,
              type=click.Choice([k.value for k in SourceKind]),
              help="Source kind for records that do not carry one.")
@click.pass_context
def kb_import(ctx, corpus, source_kind):
    """Bulk-import a JSONL corpus file."""
    with _operational():
        kb, store = _open_store(_settings(ctx), must_exist=False)
        kind = SourceKind(source_kind) if source_kind else None
        report = kb.import_corpus(corpus, source_kind=kind)
        kb.save(store)
        for lineno, message in report.diagnostics:
            click.echo(f"line {lineno}: {message}", err=True)
        click.echo(f"imported {report.imported} entries "
                   f"({len(report.diagnostics)} rejected)")


@kb_group.command("put")
@click.option("--id", "entry_id", default=None, help="Entry id to replace.")
@click.option("--key", required=True)
@click.option("--value", required=True)
@click.option("--source-kind", required=True,
              type=click.Choice([k.value for k in SourceKind]))
@click.option("--category", required=True,
              help="Category path, segments joined with '/'.")
@click.pass_context
def kb_put(ctx, entry_id, key, value, source_kind, category):
    """Insert or replace one entry."""
    with _operational():
        kb, store = _open_store(_settings(ctx), must_exist=False)
        segments = tuple(s for s in category.split("/") if s)
        if not segments or segments[0] != ROOT_LABEL:
            segments = (ROOT_LABEL,) + segments
        entry = KbEntry(id=entry_id, key=key, value=value,
                        source_kind=SourceKind(source_kind), category=segments)
        stored_id = kb.put_entry(entry)
        kb.save(store)
        click.echo(stored_id)


@kb_group.command("get")
@click.argument("entry_id")
@click.pass_context
def kb_get(ctx, entry_id):
    """Print one entry as JSON."""
    with _operational():
        kb, _ = _open_store(_settings(ctx), must_exist=True)
        entry = kb.get_entry(entry_id)
        if entry is None:
            click.echo(f"error: no entry {entry_id}", err=True)
            sys.exit(1)
        click.echo(json.dumps(
            {"id": entry.id, "key": entry.key, "value": entry.value,
             "source_kind": entry.source_kind.value,
             "category": list(entry.category)},
            sort_keys=True, ensure_ascii=False))


@kb_group.command("delete")
@click.argument("entry_id")
@click.pass_context
def kb_delete(ctx, entry_id):
    """Delete one entry."""
    with _operational():
        kb, store = _open_store(_settings(ctx), must_exist=True)
        if not kb.delete_entry(entry_id):
            click.echo(f"error: no entry {entry_id}", err=True)
            sys.exit(1)
        kb.save(store)
        click.echo(f"deleted {entry_id}")


def _echo_stats(stats) -> None:
    click.echo(f"total {stats.total}")
    for kind, count in sorted(stats.per_source.items()):
        click.echo(f"source {kind} {count}")
    for category, count in sorted(stats.per_category.items()):
        click.echo(f"category {category} {count}")


@kb_group.command("stats")
@click.option("--manifest", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Read counts from a corpus manifest instead of a store.")
@click.pass_context
def kb_stats(ctx, manifest):
    """Entry counts in total, per source kind, and per category."""
    with _operational():
        if manifest:
            _echo_stats(stats_from_manifest(manifest))
            return
        kb, _ = _open_store(_settings(ctx), must_exist=True)
        _echo_stats(kb.stats())


# -- ask --------------------------------------------------------------------

@main.command("ask")
@click.argument("question")
@click.option("--trace-out", default=None, type=click.Path(dir_okay=False),
              help="Write the executor trace as JSON lines.")
@click.pass_context
def ask(ctx, question, trace_out):
    """Answer one question."""
    with _operational():
        settings = _settings(ctx)
        ablation = AblationConfig.from_label(str(settings["ablation"]))
        with contextlib.ExitStack() as stack:
            agent, _ = _build_agent(settings, stack, need_tools=ablation.tools)
            answer = agent.answer(question, ablation)
        if trace_out and answer.trace is not None:
            Path(trace_out).write_text(serialize_trace(answer.trace),
                                       encoding="utf-8")
        for hit in answer.kb_hits:
            click.echo(f"[{hit.target_id}] score={hit.score:.6f}", err=True)
        click.echo(answer.final)


# -- eval -------------------------------------------------------------------

@main.group("eval")
def eval_group():
    """Benchmark evaluation."""


@eval_group.command("run")
@click.option("--dataset", "dataset_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False))
@click.pass_context
def eval_run(ctx, dataset_path, out_dir):
    """Run every question in a dataset and report accuracy."""
    with _operational():
        settings = _settings(ctx)
        ablation = AblationConfig.from_label(str(settings["ablation"]))
        records, diagnostics = load_dataset(dataset_path)
        for lineno, message in diagnostics:
            click.echo(f"line {lineno}: {message}", err=True)
        with contextlib.ExitStack() as stack:
            agent, _ = _build_agent(settings, stack, need_tools=ablation.tools)
            report = run_eval(records, ablation, agent,
                              dataset=Path(dataset_path).stem, out_dir=out_dir)
        click.echo(f"dataset {report.dataset}")
        click.echo(f"ablation {report.ablation}")
        click.echo(f"n {report.n}")
        click.echo(f"correct {report.n_correct}")
        click.echo(f"accuracy {report.accuracy:.2f}")
        for topic, row in sorted(report.per_topic.items()):
            click.echo(f"topic {topic} {row['n_correct']}/{row['n']} "
                       f"{row['accuracy']:.2f}")


@eval_group.command("ablation")
@click.option("--dataset", default="dataset", help="Dataset label.")
@click.option("--acc", "acc_pairs", multiple=True,
              help="label=accuracy pair; repeatable.")
@click.option("--report", "report_files", multiple=True,
              type=click.Path(exists=True, dir_okay=False),
              help="summary.json files from eval run; repeatable.")
@click.option("--baseline", default="none")
@click.pass_context
def eval_ablation(ctx, dataset, acc_pairs, report_files, baseline):
    """Tabulate accuracy deltas between ablation configurations."""
    with _operational():
        if bool(acc_pairs) == bool(report_files):
            raise click.UsageError("give either --acc pairs or --report files")
        if acc_pairs:
            accuracies = {}
            for pair in acc_pairs:
                if "=" not in pair:
                    raise click.UsageError(f"bad --acc {pair!r}; use label=value")
                label, value = pair.split("=", 1)
                try:
                    accuracies[label.strip()] = float(value)
                except ValueError:
                    raise click.UsageError(f"bad accuracy in --acc {pair!r}")
            table = ablation_table(dataset, accuracies, baseline)
        else:
            reports = []
            for path in report_files:
                doc = json.loads(Path(path).read_text(encoding="utf-8"))
                reports.append(EvalReport(
                    dataset=doc["dataset"], ablation=doc["ablation"],
                    n=doc["n"], n_correct=doc["n_correct"],
                    accuracy=doc["accuracy"], per_topic=doc["per_topic"],
                    results=(), partial=doc.get("partial", False)))
            table = ablation_table_from_reports(reports, baseline)
        click.echo(render_ablation_table(table))


# -- tools ------------------------------------------------------------------

@main.group("tools")
def tools_group():
    """Tool registry inspection and invocation."""


def _registry_for_inspection(ctx) -> ToolRegistry:
    """Spec-only registry: no compute worker or transport is started."""
    settings = _settings(ctx)
    registry = ToolRegistry(default_timeout=float(settings["tools.timeout"]))
    register_general_tools(registry, LiveTransport())
    store = str(settings["kb.store"])
    if store and (Path(store) / "registry.jsonl").exists():
        for spec in load_registry_file(Path(store) / "registry.jsonl"):
            def unavailable(args, _name=spec.name):
                raise HoneycombError(f"{_name} needs the compute worker")
            registry.register_tool(spec, unavailable)
    return registry


@tools_group.command("list")
@click.pass_context
def tools_list(ctx):
    """Registered tool names, one per line."""
    with _operational():
        for name in _registry_for_inspection(ctx).names():
            click.echo(name)


@tools_group.command("describe")
@click.argument("name")
@click.pass_context
def tools_describe(ctx, name):
    """Signature, purpose, and parameters of one tool."""
    with _operational():
        click.echo(_registry_for_inspection(ctx).describe_tool(name))


@tools_group.command("invoke")
@click.argument("name")
@click.option("--args", "args_json", default="{}",
              help="Tool arguments as a JSON object.")
@click.pass_context
def tools_invoke(ctx, name, args_json):
    """Invoke one tool and print its result."""
    with _operational():
        try:
            args = json.loads(args_json)
        except json.JSONDecodeError as exc:
            raise click.UsageError(f"--args is not valid JSON: {exc}")
        settings = _settings(ctx)
        registry = ToolRegistry(default_timeout=float(settings["tools.timeout"]))
        with contextlib.ExitStack() as stack:
            compute = None
            worker_cmd = settings.worker_cmd()
            if worker_cmd:
                compute = stack.enter_context(ComputeClient(worker_cmd))
            register_general_tools(registry, _transport(settings), compute)
            result = registry.invoke_tool(name, args)
        if result.status == "ok":
            click.echo(result.value)
        else:
            click.echo(f"[{result.status}] {result.diagnostics}", err=True)
            sys.exit(1)


# -- itc --------------------------------------------------------------------

@main.group("itc")
@click.option("--workdir", type=click.Path(file_okay=False),
              help="Pipeline working directory.  [required]")
@click.pass_context
def itc_group(ctx, workdir):
    """Inductive tool construction pipeline."""
    # Required for every subcommand, but enforced at invocation time so
    # `itc <cmd> --help` still works without one.
    ctx.obj["itc_workdir"] = Path(workdir) if workdir else None


def _workdir(ctx) -> Path:
    path = ctx.obj["itc_workdir"]
    if path is None:
        raise click.UsageError("Missing option '--workdir'.")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _audit(workdir: Path) -> itc_mod.AuditLog:
    return itc_mod.AuditLog(workdir / "audit.jsonl")


@itc_group.command("split")
@click.option("--questions", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--ratio", default=0.8, show_default=True)
@click.pass_context
def itc_split(ctx, questions, ratio):
    """Split questions into training and held-out files."""
    with _operational():
        workdir = _workdir(ctx)
        seed = int(_settings(ctx)["seed"])
        split = itc_mod.split_dataset(itc_mod.load_questions(questions),
                                      ratio, seed)
        itc_mod.save_questions(list(split.train), workdir / "d_train.jsonl")
        itc_mod.save_questions(list(split.test), workdir / "d_test.jsonl")
        _audit(workdir).append("split", "done", train=len(split.train),
                               test=len(split.test), seed=seed, ratio=ratio)
        click.echo(f"train {len(split.train)}")
        click.echo(f"test {len(split.test)}")


@itc_group.command("generate")
@click.pass_context
def itc_generate(ctx):
    """Generate one pending solver function per training question."""
    with _operational():
        workdir = _workdir(ctx)
        settings = _settings(ctx)
        gateway = Gateway(make_provider(str(settings["provider"]),
                                        str(settings["llm.cassette_dir"]) or None),
                          temperature=float(settings["llm.temperature"]))
        audit = _audit(workdir)
        functions = []
        pending_lines = []
        for question in itc_mod.load_questions(workdir / "d_train.jsonl"):
            fn = itc_mod.generate_function(gateway, question)
            functions.append(fn)
            audit.append("generate", "pending", function_id=fn.id,
                         question_id=question.id,
                         code_digest=itc_mod.code_digest(fn.code))
            pending_lines.append(json.dumps(
                {"function_id": fn.id, "question_id": fn.question_id,
                 "signature": fn.signature,
                 "code_digest": itc_mod.code_digest(fn.code)},
                sort_keys=True, ensure_ascii=False))
        itc_mod.save_functions(functions, workdir / "functions.jsonl")
        (workdir / "pending_review.jsonl").write_text(
            "\n".join(pending_lines) + ("\n" if pending_lines else ""),
            encoding="utf-8")
        click.echo(f"generated {len(functions)} functions awaiting review")


@itc_group.command("review")
@click.option("--verdicts", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def itc_review(ctx, verdicts):
    """Apply reviewer verdicts to pending functions."""
    with _operational():
        workdir = _workdir(ctx)
        functions = itc_mod.load_functions(workdir / "functions.jsonl")
        updated, report = itc_mod.apply_review(functions, verdicts,
                                               _audit(workdir))
        itc_mod.save_functions(updated, workdir / "functions.jsonl")
        click.echo(f"approved {len(report.approved)}")
        click.echo(f"rejected {len(report.rejected)}")
        for fid in report.unknown_ids:
            click.echo(f"unknown function id {fid}", err=True)
        for fid in report.skipped:
            click.echo(f"already reviewed: {fid}", err=True)


@itc_group.command("decompose")
@click.pass_context
def itc_decompose(ctx):
    """Decompose approved functions into atomic functions."""
    with _operational():
        workdir = _workdir(ctx)
        settings = _settings(ctx)
        gateway = Gateway(make_provider(str(settings["provider"]),
                                        str(settings["llm.cassette_dir"]) or None),
                          temperature=float(settings["llm.temperature"]))
        audit = _audit(workdir)
        atoms: list[itc_mod.AtomicFunction] = []
        n_functions = 0
        for fn in itc_mod.load_functions(workdir / "functions.jsonl"):
            if fn.status != itc_mod.STATUS_APPROVED:
                continue
            n_functions += 1
            atoms.extend(itc_mod.decompose_function(gateway, fn, audit))
        itc_mod.save_atoms(atoms, workdir / "atoms_raw.jsonl")
        click.echo(f"decomposed {n_functions} functions into {len(atoms)} atoms")


@itc_group.command("merge")
@click.option("--registry-out", default="registry.jsonl", show_default=True,
              help="Tool-registry file name inside the workdir.")
@click.pass_context
def itc_merge(ctx, registry_out):
    """Merge raw atoms into the deduplicated registry and source bundle."""
    with _operational():
        workdir = _workdir(ctx)
        raw = itc_mod.load_atoms(workdir / "atoms_raw.jsonl")
        existing_path = workdir / "atoms.jsonl"
        existing = (itc_mod.load_atoms(existing_path)
                    if existing_path.exists() else [])
        merged = itc_mod.merge_atoms(existing, raw)
        itc_mod.save_atoms(merged, existing_path)
        from .tool_hub import save_registry_file
        save_registry_file(workdir / registry_out,
                           itc_mod.atoms_to_toolspecs(merged))
        itc_mod.write_atomic_bundle(merged, workdir / "bundle.json")
        _audit(workdir).append("merge", "done", existing=len(existing),
                               incoming=len(raw), merged=len(merged))
        click.echo(f"registry holds {len(merged)} atomic tools")


if __name__ == "__main__":
    main()
