"""Command-line interface.

Every subcommand is a thin shim: parse arguments, call the library, print.
Exit codes: 0 success, 2 bad input or engine error, 3 evaluation aborted
partway by a backend failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .datasets import LabelSet, load_captions, load_index, load_vqa, save_index, save_vqa
from .errors import MprError
from .gateway import MockGateway, RemoteGateway, resolve_image_argument
from .harness import EvalConfig, ingest, report_render, run_eval
from .pipeline import AnswerPipeline
from .prompts import PromptConfig, PromptOrder, QuantifierScale, RetrievalPromptTemplate
from .synth import SynthConfig, default_bank, generate, generation_metadata, load_bank

_MODE_BY_FLAG = {"zero-shot": "zero_shot", "in-context": "in_context", "knn": "knn_baseline"}


def _prompt_config(args) -> PromptConfig:
    order = PromptOrder.from_code(args.order) if getattr(args, "order", None) else PromptOrder()
    template = (
        RetrievalPromptTemplate(args.template)
        if getattr(args, "template", None)
        else RetrievalPromptTemplate()
    )
    return PromptConfig(order=order, template=template, scale=QuantifierScale())


def _gateway(args, prompt_config: PromptConfig):
    if args.backend == "remote":
        return RemoteGateway(args.endpoint)
    return MockGateway(
        prompt_config=prompt_config,
        echo_threshold=getattr(args, "echo_threshold", None),
    )


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=("mock", "remote"), default="mock")
    parser.add_argument("--endpoint", help="model server URL, required with --backend remote")
    parser.add_argument(
        "--echo-threshold",
        type=int,
        default=None,
        help="mock only: lowest quantifier index the mock generator trusts",
    )


def _add_prompt_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--order", help="segment order code: IQR, QRI, or IRQ")
    parser.add_argument("--template", help="retrieval hint template with {quantifier} and {answer}")


def _require_endpoint(args, parser: argparse.ArgumentParser) -> None:
    if args.backend == "remote" and not args.endpoint:
        parser.error("--backend remote requires --endpoint")


def _cmd_synth(args) -> int:
    captions = load_captions(args.captions)
    bank = load_bank(args.bank) if args.bank else default_bank()
    config = SynthConfig(
        seed=args.seed,
        negative_ratio=args.negative_ratio,
        max_pairs_per_caption=args.max_pairs_per_caption,
    )
    examples = generate(captions, bank, config)
    save_vqa(examples, args.out)
    meta_path = args.out + ".meta.json"
    with open(meta_path, "w", encoding="utf-8") as handle:
        json.dump(generation_metadata(bank, config), handle, indent=2, sort_keys=True)
        handle.write("\n")
    print(f"wrote {len(examples)} examples to {args.out} (metadata: {meta_path})")
    return 0


def _cmd_ingest(args) -> int:
    _require_endpoint(args, args.parser)
    examples = load_vqa(args.dataset, closed_vocab=None)
    gateway = _gateway(args, PromptConfig())
    index = ingest(examples, gateway)
    save_index(index, args.out)
    print(f"indexed {len(index)} records at dim {index.dim} into {args.out}")
    return 0


def _cmd_answer(args) -> int:
    _require_endpoint(args, args.parser)
    prompt_config = _prompt_config(args)
    gateway = _gateway(args, prompt_config)
    index = load_index(args.index)
    labels = LabelSet(record.answer for record in index.records)
    pipeline = AnswerPipeline(gateway, index, labels, prompt_config=prompt_config)
    image_ref = resolve_image_argument(args.image, inline_files=args.backend == "remote")
    k = 0 if args.zero_shot else args.k
    trace = pipeline.answer(args.question, image_ref, k, q_type=args.q_type)
    if args.verbose:
        print(trace.dumps())
    else:
        print(trace.label)
    return 0


def _cmd_eval(args) -> int:
    _require_endpoint(args, args.parser)
    cfg = EvalConfig(
        test_path=args.test,
        retrieval_path=args.retrieval,
        k=args.k,
        mode=_MODE_BY_FLAG[args.mode],
        backend=args.backend,
        endpoint=args.endpoint,
        prompt=_prompt_config(args),
        seed=args.seed,
        echo_threshold=args.echo_threshold,
        collect_traces=bool(args.out and args.verbose),
    )
    report = run_eval(cfg)
    sys.stdout.write(report_render(report, fmt=args.format))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(report_render(report, fmt="records"))
    return 3 if report.incomplete else 0


def _cmd_serve(args) -> int:
    _require_endpoint(args, args.parser)
    import uvicorn

    from .service import build_service

    app = build_service(
        index_path=args.index,
        backend=args.backend,
        endpoint=args.endpoint,
        prompt_config=_prompt_config(args),
        default_k=args.k,
        echo_threshold=args.echo_threshold,
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpr",
        description="Retrieval-augmented multimodal question answering engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate synthetic QA pairs from captions")
    p_synth.add_argument("--captions", required=True, help="caption dataset (JSON lines)")
    p_synth.add_argument("--bank", help="template bank file; omit for the built-in bank")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--negative-ratio", type=float, default=0.5)
    p_synth.add_argument("--max-pairs-per-caption", type=int, default=None)
    p_synth.add_argument("--out", required=True, help="output dataset path (JSON lines)")
    p_synth.set_defaults(func=_cmd_synth, parser=p_synth)

    p_ingest = sub.add_parser("ingest", help="encode a dataset into a binary index file")
    p_ingest.add_argument("--dataset", required=True, help="VQA dataset (JSON lines)")
    _add_backend_flags(p_ingest)
    p_ingest.add_argument("--out", required=True, help="output index path")
    p_ingest.set_defaults(func=_cmd_ingest, parser=p_ingest)

    p_answer = sub.add_parser("answer", help="answer one question against an index")
    p_answer.add_argument("--index", required=True)
    p_answer.add_argument("--question", required=True)
    p_answer.add_argument("--image", required=True, help="image path or opaque reference")
    p_answer.add_argument("--k", type=int, default=1)
    p_answer.add_argument("--zero-shot", action="store_true", help="skip retrieval entirely")
    p_answer.add_argument("--q-type", default=None, help="question type for the instruction")
    p_answer.add_argument("--verbose", action="store_true", help="print the full trace as JSON")
    _add_backend_flags(p_answer)
    _add_prompt_flags(p_answer)
    p_answer.set_defaults(func=_cmd_answer, parser=p_answer)

    p_eval = sub.add_parser("eval", help="evaluate a dataset")
    p_eval.add_argument("--test", required=True, help="test dataset (JSON lines)")
    p_eval.add_argument("--retrieval", help="retrieval dataset (JSON lines) or index file")
    p_eval.add_argument("--k", type=int, default=1)
    p_eval.add_argument("--mode", choices=tuple(_MODE_BY_FLAG), default="in-context")
    _add_backend_flags(p_eval)
    _add_prompt_flags(p_eval)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", help="write the report (and traces with --verbose) as JSON lines")
    p_eval.add_argument("--format", choices=("table", "records"), default="table")
    p_eval.add_argument("--verbose", action="store_true", help="include per-example traces in --out")
    p_eval.set_defaults(func=_cmd_eval, parser=p_eval)

    p_serve = sub.add_parser("serve", help="serve POST /v1/answer over an index")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--index", required=True)
    p_serve.add_argument("--k", type=int, default=1, help="default k when requests omit it")
    _add_backend_flags(p_serve)
    _add_prompt_flags(p_serve)
    p_serve.set_defaults(func=_cmd_serve, parser=p_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MprError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
