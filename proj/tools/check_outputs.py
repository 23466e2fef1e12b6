#!/usr/bin/env python3
"""Runs every subcommand of the CLI into a scratch directory and validates the
JSON outputs against docs/schemas and the CSV header rows against
docs/schemas/csv_columns.json."""

import argparse
import csv
import json
import pathlib
import re
import shutil
import subprocess
import sys

import jsonschema
from referencing import Registry, Resource

CONFIG = {
    "dims": [1, 8, 8, 1],
    "optimizer": {"kind": "sgd", "gamma": 0.05},
    "steps": 2000,
    "runs": 3,
    "widths": [4, 8, 16],
    "depths": [1, 2],
    "samples": 300,
}

JSON_SCHEMAS = {
    "config.json": "config.schema.json",
    "params_*.json": "params.schema.json",
    "theta_improved*.json": "params.schema.json",
    "certificate*.json": "certificate.schema.json",
    "grad_check.json": "grad_check.schema.json",
    "bound_report.json": "bound_report.schema.json",
}


def load_registry(schema_dir):
    resources = []
    for path in schema_dir.glob("*.schema.json"):
        resources.append((path.name, Resource.from_contents(json.loads(path.read_text()))))
    return Registry().with_resources(resources)


def validator(registry, name):
    schema = registry[name].contents
    return jsonschema.Draft202012Validator(schema, registry=registry)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cli", required=True)
    ap.add_argument("--schemas", required=True, type=pathlib.Path)
    ap.add_argument("--work", required=True, type=pathlib.Path)
    args = ap.parse_args()

    shutil.rmtree(args.work, ignore_errors=True)
    args.work.mkdir(parents=True)
    cfg = args.work / "config.json"
    cfg.write_text(json.dumps(CONFIG))
    out = args.work / "out"

    def run(*argv):
        subprocess.run([args.cli, "--config", str(cfg), "--out", str(out), *argv], check=True,
                       stdout=subprocess.DEVNULL)

    for sub in ("train", "sweep", "mc-inactive", "bound-report", "grad-check"):
        run(sub)
    subprocess.run([args.cli, "--out", str(out / "certify"), "improve-certify",
                    "--params", str(out / "params_final_run0.json"), "--init", str(out / "params_init_run0.json"),
                    "--data", str(out / "dataset.csv"), "--trajectory", str(out / "trajectory.csv"), "--run", "0"],
                   check=True, stdout=subprocess.DEVNULL)

    registry = load_registry(args.schemas)
    errors = []
    checked = 0
    validator(registry, "config.schema.json").validate(CONFIG)
    for pattern, schema in JSON_SCHEMAS.items():
        v = validator(registry, schema)
        for path in sorted(out.rglob(pattern)):
            checked += 1
            for e in v.iter_errors(json.loads(path.read_text())):
                errors.append(f"{path.relative_to(out)}: {e.message}")
    run_schema = validator(registry, "run_record.schema.json")
    for line in (out / "runs.jsonl").read_text().splitlines():
        checked += 1
        for e in run_schema.iter_errors(json.loads(line)):
            errors.append(f"runs.jsonl: {e.message}")

    columns = json.loads((args.schemas / "csv_columns.json").read_text())
    for path in sorted(out.rglob("*.csv")):
        with path.open() as f:
            header = next(csv.reader(f))
        checked += 1
        if path.name == "dataset.csv":
            if not (header[-1] == "y" and all(re.fullmatch(r"x_\d+", h) for h in header[:-1])):
                errors.append(f"{path.name}: unexpected header {header}")
        elif header != columns.get(path.name):
            errors.append(f"{path.name}: header {header} differs from the documented columns")

    for e in errors:
        print(e)
    print(f"{checked} outputs checked, {len(errors)} problems")
    return 1 if errors else 0


if __name__ == "__main__":
    sys.exit(main())
