"""Run every Python file of a directory as __main__ and print their outputs as JSON."""

import contextlib
import io
import json
import os
import random
import runpy
import sys


def run(path):
    out = io.StringIO()
    random.seed(0)
    try:
        with contextlib.redirect_stdout(out):
            runpy.run_path(path, run_name="__main__")
        status = "ok"
    except BaseException as exc:  # noqa: BLE001 - any failure is an output
        status = "raised " + type(exc).__name__
    return {"status": status, "stdout": out.getvalue()}


def main():
    root = sys.argv[1]
    names = sorted(n for n in os.listdir(root) if n.endswith(".py"))
    json.dump({n: run(os.path.join(root, n)) for n in names}, sys.stdout, sort_keys=True)


if __name__ == "__main__":
    main()
