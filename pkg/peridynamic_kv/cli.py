# -*- coding: utf-8 -*-
# Copyright: (c) 2026, peridynamic-kv contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

"""Command line front end: peridynamic-kv {verify,simulate,sweep} [--config FILE] [options]."""

from __future__ import absolute_import, division, print_function

__metaclass__ = type

import argparse
import json
import logging
import os
import sys

from ansible.module_utils.common.text.converters import to_native

from peridynamic_kv import __version__
from peridynamic_kv.module_utils.common import (
    ConfigurationError,
    KelvinVoigtConstants,
    KelvinVoigtFunctions,
)
from peridynamic_kv.modules import simulate, sweep, verify

log = logging.getLogger("peridynamic_kv")

COMMANDS = {
    "verify": verify.main,
    "simulate": simulate.main,
    "sweep": sweep.main,
}
LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="peridynamic-kv",
        description="Peridynamic Kelvin-Voigt viscoelasticity: verification, "
        "simulation and horizon sweeps.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS), help="what to run")
    parser.add_argument("--config", help="YAML run configuration (defaults when omitted)")
    parser.add_argument("--output", help="output directory (env PERIKV_OUTPUT)")
    parser.add_argument("--seed", type=int, help="seed of the randomized suites (env PERIKV_SEED)")
    parser.add_argument("--threads", type=int, help="worker threads (env PERIKV_THREADS)")
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="-v for progress, -vv for debug output",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def _configure_logging(verbosity):
    level = LEVELS[min(max(verbosity, 0), len(LEVELS) - 1)]
    root = logging.getLogger()
    fresh = not root.handlers
    logging.basicConfig(format="%(message)s")
    if fresh:
        # run.log wants INFO even when the console stays at WARNING
        root.handlers[0].setLevel(level)
    log.setLevel(min(level, logging.INFO))


def _fail_early(msg, output):
    """Configuration failure before a command could take over the output directory."""
    log.error(msg)
    if output:
        try:
            os.makedirs(output, exist_ok=True)
            with open(
                os.path.join(output, KelvinVoigtConstants.FAILED_MARKER), "w", encoding="utf-8"
            ) as fh:
                fh.write(msg + "\n")
        except OSError as err:
            log.warning("could not write failure marker: %s", to_native(err))
    error = {"Message": msg, "Reason": "ConfigurationError", "Exit Code": 2}
    print(json.dumps(dict(failed=True, msg=msg, error=error), sort_keys=True))
    return KelvinVoigtConstants.EXIT_CONFIG


def main(argv=None, pair_factory=None):
    """Run one command and return its exit code (0 ok, 1 gate or solver, 2 configuration)."""
    args = build_parser().parse_args(argv)
    source = args.config or "<defaults>"
    flags = dict(output=args.output, seed=args.seed, threads=args.threads)
    try:
        params, lines = ({}, {})
        if args.config:
            params, lines = KelvinVoigtFunctions.read_config(args.config)
        params = KelvinVoigtFunctions.apply_overrides(params, flags)
    except ConfigurationError as err:
        return _fail_early(to_native(err), args.output)

    mode = params.setdefault("mode", args.command)
    if mode != args.command:
        line = lines.get(("mode",))
        where = f"{source}:{line}" if line else source
        return _fail_early(
            f"{where}: mode: config is for {mode!r}, not {args.command!r}",
            params.get("output"),
        )
    verbosity = params.get("verbosity")
    _configure_logging(max(args.verbose, verbosity if isinstance(verbosity, int) else 0))

    command = COMMANDS[args.command]
    try:
        if args.command == "simulate":
            command(params, source, lines, pair_factory=pair_factory)
        else:
            command(params, source, lines)
    except SystemExit as exc:
        return int(exc.code or 0)
    return KelvinVoigtConstants.EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
