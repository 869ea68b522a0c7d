"""Command-line launcher: `ppl-service --host 0.0.0.0 --port 8100`."""

import argparse

import uvicorn

from .service import create_app


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(
        prog="ppl-service",
        description="serve perplexity scores over HTTP",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8100)
    parser.add_argument(
        "--model-path",
        default=None,
        help="path to a model JSON file (defaults to the bundled model)",
    )
    args = parser.parse_args(argv)

    app = create_app(args.model_path)
    uvicorn.run(app, host=args.host, port=args.port)


if __name__ == "__main__":
    main()
