"""Command-line front end for the toolkit.

Subcommands compose into shell pipelines: raw document JSONL flows
through ``ingest`` and ``segment``, sentence JSONL through ``filter``
and ``classify``, and the annotation store feeds ``gold``, ``agree``,
and ``export-train``.  Data rows go to stdout, per-line complaints and
summaries to stderr.  Exit codes: 0 ok, 1 usage error, 2 bad data,
3 endpoint failure.
"""

from __future__ import annotations

import json
import os
import sys
from collections import Counter
from pathlib import Path

import click

from . import agreement, analytics, corpus, evaluation, inference, service
from . import store as store_mod
from .ontology import UnknownLabelError, load_builtin, load_ontology

try:
    from click.exceptions import NoArgsIsHelpError
except ImportError:  # older click: bare invocation stays a plain usage error
    class NoArgsIsHelpError(click.UsageError):
        pass

MODE_NAMES = {"zero": "zero_shot", "few": "few_shot", "ft": "finetune_style"}


def _load_ontology(path):
    return load_ontology(path) if path else load_builtin()


def ontology_option(fn):
    return click.option(
        "--ontology",
        "ontology_path",
        type=click.Path(exists=True, dir_okay=False),
        default=None,
        help="Ontology config JSON (default: the built-in inflation ontology).",
    )(fn)


def mode_option(default: str):
    return click.option(
        "--mode",
        type=click.Choice(sorted(MODE_NAMES)),
        default=default,
        show_default=True,
        help="Prompt style: zero-shot, few-shot, or fine-tune.",
    )


def _open_input(path):
    if path in (None, "-"):
        return sys.stdin
    return open(path, encoding="utf-8")


def _emit(doc: dict):
    sys.stdout.write(json.dumps(doc, ensure_ascii=False) + "\n")


def _read_sentences(stream):
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            yield corpus.sentence_from_json(json.loads(line))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise corpus.CorpusError(f"sentence line {line_no}: {exc}")


def _stderr_skip(line_no, reason):
    click.echo(f"skip line {line_no}: {reason}", err=True)


def _build_spec(mode_flag, ontology_path, instruction_path, exemplars_path):
    mode = MODE_NAMES[mode_flag]
    ontology = _load_ontology(ontology_path)
    if instruction_path is None and exemplars_path is None:
        return inference.load_default_spec(mode, ontology)
    if instruction_path is not None:
        instruction = Path(instruction_path).read_text(encoding="utf-8")
    else:
        instruction = inference.default_instruction()
    exemplars = ()
    if mode == "few_shot":
        if exemplars_path is not None:
            with open(exemplars_path, encoding="utf-8") as fh:
                exemplars = inference.load_exemplars(fh, ontology)
        else:
            exemplars = inference.load_default_spec(mode, ontology).exemplars
    spec = inference.PromptSpec(
        mode=mode, ontology=ontology, instruction=instruction, exemplars=exemplars
    )
    spec.validate()
    return spec


def _load_store(store_path, ontology_path):
    return store_mod.AnnotationStore(store_path, _load_ontology(ontology_path))


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option(
    "--seed",
    type=int,
    default=None,
    help="Seed forwarded to any operation that samples; accepted globally so pipelines stay flag-compatible.",
)
@click.pass_context
def cli(ctx, seed):
    """Causal micro-narrative toolkit: corpus prep, annotation, classification, scoring."""
    ctx.obj = {"seed": seed}


@cli.command()
@click.argument("input", default="-", required=False)
@click.option("--source", default=None, help="Override every document's corpus tag.")
def ingest(input, source):
    """Normalize raw document JSONL; malformed lines are skipped with a note."""
    n = 0
    for doc in corpus.ingest(_open_input(input), source=source, on_error=_stderr_skip):
        _emit(doc.to_json())
        n += 1
    click.echo(f"{n} documents", err=True)


@cli.command()
@click.argument("input", default="-", required=False)
@click.option("--workers", default=1, show_default=True, help="Parallel segmentation workers.")
@click.option("--unordered", is_flag=True, help="Yield documents as workers finish instead of in input order.")
@click.option("--cap-words", default=400, show_default=True, help="Force a split in any segment longer than this many words.")
def segment(input, workers, unordered, cap_words):
    """Split documents into sentence JSONL with stable ids."""
    config = corpus.SegmenterConfig(hard_cap_words=cap_words)
    docs = corpus.ingest(_open_input(input), on_error=_stderr_skip)
    for sentence in corpus.segment_documents(
        docs, config, workers=workers, ordered=not unordered
    ):
        _emit(sentence.to_json())


@cli.command("filter")
@click.argument("input", default="-", required=False)
@ontology_option
@click.option("--keyword", default=None, help="Keyword to keep (default: the ontology's keyword).")
@click.option("--max-words", default=150, show_default=True, help="Drop sentences longer than this many words.")
@click.option("--word-boundary", is_flag=True, help="Match the keyword as a whole word instead of a substring.")
def filter_cmd(input, ontology_path, keyword, max_words, word_boundary):
    """Keep sentences that mention the keyword and fit the length cutoff."""
    keyword = keyword or _load_ontology(ontology_path).keyword
    for sentence in corpus.filter_sentences(
        _read_sentences(_open_input(input)), keyword, max_words, word_boundary
    ):
        _emit(sentence.to_json())


@cli.command()
@click.argument("input", default="-", required=False)
@ontology_option
@mode_option("few")
@click.option("--instruction", "instruction_path", type=click.Path(exists=True, dir_okay=False), default=None, help="Replace the built-in instruction text.")
@click.option("--exemplars", "exemplars_path", type=click.Path(exists=True, dir_okay=False), default=None, help="Replace the built-in few-shot exemplar JSONL.")
@click.option("--sentence", default=None, help="Render one prompt for this text instead of reading sentence JSONL.")
def prompt(input, ontology_path, mode, instruction_path, exemplars_path, sentence):
    """Render classification prompts, whole or as per-sentence JSONL."""
    spec = _build_spec(mode, ontology_path, instruction_path, exemplars_path)
    if sentence is not None:
        click.echo(inference.build_prompt(spec, sentence))
        return
    for s in _read_sentences(_open_input(input)):
        _emit({"sentence_id": s.sentence_id, "prompt": inference.build_prompt(spec, s.text)})


@cli.command()
@click.argument("input", default="-", required=False)
@ontology_option
@mode_option("few")
@click.option("--model", required=True, help="Model name sent to the endpoint.")
@click.option("--endpoint", required=True, help="Chat-completions URL.")
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None, help="Disk cache for raw completions.")
@click.option("--concurrency", default=4, show_default=True, help="Max in-flight requests.")
@click.option("--temperature", default=0.0, show_default=True)
@click.option("--max-tokens", default=512, show_default=True)
@click.option("--timeout", default=30.0, show_default=True, help="Per-request timeout in seconds.")
@click.option("--max-retries", default=3, show_default=True, help="Retries for transient endpoint failures.")
@click.option("--instruction", "instruction_path", type=click.Path(exists=True, dir_okay=False), default=None, help="Replace the built-in instruction text.")
@click.option("--exemplars", "exemplars_path", type=click.Path(exists=True, dir_okay=False), default=None, help="Replace the built-in few-shot exemplar JSONL.")
def classify(
    input,
    ontology_path,
    mode,
    model,
    endpoint,
    cache_dir,
    concurrency,
    temperature,
    max_tokens,
    timeout,
    max_retries,
    instruction_path,
    exemplars_path,
):
    """Classify sentences against a model endpoint; one result JSON per line."""
    spec = _build_spec(mode, ontology_path, instruction_path, exemplars_path)
    config = inference.ModelConfig(
        endpoint=endpoint,
        model=model,
        temperature=temperature,
        max_tokens=max_tokens,
        timeout=timeout,
        max_retries=max_retries,
        concurrency=concurrency,
        cache_dir=cache_dir,
    )
    tally: Counter = Counter()
    for result in inference.classify(_read_sentences(_open_input(input)), spec, config):
        tally[result.status] += 1
        if result.cached:
            tally["cached"] += 1
        _emit(result.to_json())
    click.echo(" ".join(f"{k}={v}" for k, v in sorted(tally.items())), err=True)


@cli.command("export-train")
@ontology_option
@mode_option("ft")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Annotation store JSONL.")
@click.option("--sentences", "sentences_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Sentence JSONL supplying the text for each annotated id.")
@click.option("--split", default="train", show_default=True)
def export_train(ontology_path, mode, store_path, sentences_path, split):
    """Emit prompt/completion JSONL for an external fine-tuning run."""
    ontology = _load_ontology(ontology_path)
    spec = inference.load_default_spec(MODE_NAMES[mode], ontology)
    st = store_mod.AnnotationStore(store_path, ontology)
    with open(sentences_path, encoding="utf-8") as fh:
        texts = {s.sentence_id: s.text for s in _read_sentences(fh)}
    n = 0
    for row in inference.dataset_export(st, texts, spec, split=split):
        _emit(row)
        n += 1
    click.echo(f"{n} training records", err=True)


@cli.command()
@ontology_option
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--split", default="test", show_default=True)
def gold(ontology_path, store_path, split):
    """Derive majority-vote gold rows from an annotation store."""
    table, summary = _load_store(store_path, ontology_path).gold_table(split)
    for row in table:
        _emit(row.to_json())
    click.echo(json.dumps(summary.to_json()), err=True)


@cli.command()
@ontology_option
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--split", default="test", show_default=True)
@click.option("--delta", type=click.Choice(["masi", "masi-squared"]), default="masi", show_default=True, help="Distance between label sets.")
@click.option("--sources", "sources_path", type=click.Path(exists=True, dir_okay=False), default=None, help="JSON object mapping sentence ids to corpus tags for per-source rows.")
def agree(ontology_path, store_path, split, delta, sources_path):
    """Krippendorff's alpha for the binary flag and the label sets."""
    st = _load_store(store_path, ontology_path)
    sources = None
    if sources_path is not None:
        with open(sources_path, encoding="utf-8") as fh:
            sources = json.load(fh)
    rows = agreement.agreement_report(st, split=split, delta=delta, sources=sources)
    click.echo(json.dumps({"split": split, "delta": delta, "rows": rows}, indent=2))


def _report_from_files(pred_path, gold_path, ontology):
    return evaluation.evaluate(
        evaluation.read_predictions(pred_path),
        store_mod.read_gold(gold_path),
        ontology,
    )


@cli.command("eval")
@ontology_option
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Classify-results JSONL.")
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Gold export JSONL.")
@click.option("--json", "json_path", type=click.Path(dir_okay=False), default=None, help="Also write the machine-readable report here.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None, help="Also write the confusion matrix CSV here.")
def eval_cmd(ontology_path, pred_path, gold_path, json_path, csv_path):
    """Score predictions against gold: detection F1, micro F1, confusion."""
    report = _report_from_files(pred_path, gold_path, _load_ontology(ontology_path))
    click.echo(report.to_text(), nl=False)
    if json_path is not None:
        Path(json_path).write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
    if csv_path is not None:
        Path(csv_path).write_text(report.confusion.to_csv(), encoding="utf-8")


@cli.command()
@ontology_option
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Classify-results JSONL.")
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Gold export JSONL.")
@click.option("--heatmap", "heatmap_path", type=click.Path(dir_okay=False), default=None, help="Also render the matrix as an image.")
def confusion(ontology_path, pred_path, gold_path, heatmap_path):
    """Emit the none-matched confusion matrix as CSV."""
    report = _report_from_files(pred_path, gold_path, _load_ontology(ontology_path))
    click.echo(report.confusion.to_csv(), nl=False)
    if heatmap_path is not None:
        analytics.confusion_heatmap(report.confusion, heatmap_path)


@cli.command()
@ontology_option
@click.option("--by", type=click.Choice(["class", "time"]), default="class", show_default=True, help="Class prevalence or a narrative time series.")
@click.option("--bucket", type=click.Choice(["month", "quarter", "year"]), default="month", show_default=True)
@click.option("--pred", "pred_path", type=click.Path(exists=True, dir_okay=False), default=None, help="Classify-results JSONL.")
@click.option("--gold", "gold_path", type=click.Path(exists=True, dir_okay=False), default=None, help="Gold export JSONL (human labels).")
@click.option("--sentences", "sentences_path", type=click.Path(exists=True, dir_okay=False), default=None, help="Sentence JSONL supplying dates (required with --by time).")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Directory for CSVs and images.")
def report(ontology_path, by, bucket, pred_path, gold_path, sentences_path, out_dir):
    """Descriptive statistics over labels: prevalence charts or a time series."""
    ontology = _load_ontology(ontology_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if by == "class":
        if (pred_path is None) == (gold_path is None):
            raise click.UsageError("--by class needs exactly one of --pred or --gold")
        if pred_path is not None:
            preds = evaluation.read_predictions(pred_path)
            flags = [p.contains_narrative for p in preds]
            label_sets = [p.labels for p in preds]
        else:
            rows = store_mod.read_gold(gold_path)
            flags = [g.binary_gold for g in rows]
            label_sets = [g.labels_gold for g in rows]
        for kind in ("cause", "effect"):
            table = analytics.prevalence(label_sets, kind, ontology)
            csv_path = out / f"prevalence_{kind}.csv"
            csv_path.write_text(analytics.prevalence_csv(table), encoding="utf-8")
            png_path = out / f"prevalence_{kind}.png"
            analytics.prevalence_chart(table, f"{kind} prevalence", png_path)
            written += [csv_path, png_path]
        rate = analytics.nonnarrative_rate(flags)
        rate_path = out / "nonnarrative.json"
        rate_path.write_text(json.dumps(rate.to_json(), indent=2) + "\n", encoding="utf-8")
        written.append(rate_path)
    else:
        if pred_path is None or sentences_path is None:
            raise click.UsageError("--by time needs --pred and --sentences")
        preds = evaluation.read_predictions(pred_path)
        with open(sentences_path, encoding="utf-8") as fh:
            dates = {s.sentence_id: s.date for s in _read_sentences(fh)}
        classified = []
        for p in preds:
            date = dates.get(p.sentence_id)
            if date is None:
                raise analytics.AnalyticsError(f"no date for {p.sentence_id!r}")
            classified.append(
                analytics.ClassifiedSentence(
                    date=date, contains_narrative=p.contains_narrative, labels=p.labels
                )
            )
        table = analytics.timeseries(classified, bucket)
        csv_path = out / "timeseries.csv"
        csv_path.write_text(analytics.timeseries_csv(table, ontology), encoding="utf-8")
        png_path = out / "timeseries.png"
        analytics.timeseries_chart(table, f"narratives per {bucket}", png_path)
        written += [csv_path, png_path]
    for path in written:
        click.echo(f"wrote {path}", err=True)


@cli.command()
@ontology_option
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--sentences", "sentences_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Sentence JSONL forming the task queue.")
@click.option("--store", "store_path", required=True, type=click.Path(dir_okay=False), help="Annotation store JSONL (created if missing).")
@click.option("--split", type=click.Choice(["train", "test"]), default="test", show_default=True)
@click.option("--annotators", default=None, help="Comma-separated allow-list; required for the train split.")
@click.option("--ui", "ui_dir", type=click.Path(exists=True, file_okay=False), default=None, help="Directory of built UI files served at /.")
def serve(ontology_path, port, host, sentences_path, store_path, split, annotators, ui_dir):
    """Run the annotation service (HTTP API plus optional static UI)."""
    import uvicorn

    ontology = _load_ontology(ontology_path)
    with open(sentences_path, encoding="utf-8") as fh:
        sentences = list(_read_sentences(fh))
    st = store_mod.AnnotationStore(store_path, ontology)
    app = service.create_app(
        ontology,
        st,
        sentences,
        split=split,
        annotators=[a for a in annotators.split(",") if a] if annotators else None,
        ui_dir=ui_dir,
    )
    click.echo(f"serving {len(sentences)} {split} sentences on http://{host}:{port}", err=True)
    uvicorn.run(app, host=host, port=port, log_level="warning")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except NoArgsIsHelpError as exc:
        click.echo(exc.format_message())
        return 0
    except click.UsageError as exc:
        click.echo(f"error: usage: {exc.format_message()}", err=True)
        return 1
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("error: usage: aborted", err=True)
        return 1
    except inference.AuthenticationError as exc:
        click.echo(f"error: endpoint: {exc}", err=True)
        return 3
    except BrokenPipeError:
        # Downstream closed the pipe (e.g. | head); not an error.
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except (OSError, ValueError, UnknownLabelError) as exc:
        click.echo(f"error: data: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
