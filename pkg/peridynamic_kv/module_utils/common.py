# -*- coding: utf-8 -*-
# Copyright: (c) 2026, peridynamic-kv contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

from __future__ import absolute_import, division, print_function

__metaclass__ = type

import csv
import json
import logging
import os
import sys

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
import yaml
from ansible.module_utils.basic import env_fallback
from ansible.module_utils.common.arg_spec import ArgumentSpecValidator
from ansible.module_utils.common.text.converters import to_native
from ansible.module_utils.errors import AnsibleFallbackNotFound

log = logging.getLogger(__name__)


class KelvinVoigtError(Exception):
    """Base class for every failure raised by the lab."""

    exit_code = 1


class ConfigurationError(KelvinVoigtError):
    exit_code = 2


class KernelAssumptionError(ConfigurationError):
    pass


class InitialDataError(ConfigurationError):
    pass


class AssemblyError(KelvinVoigtError):
    pass


class InvariantError(KelvinVoigtError):
    pass


class SolverError(KelvinVoigtError):
    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class KelvinVoigtConstants:
    CG_RTOL = 1e-10
    CG_MAXITER = 20000
    MASS_TOLERANCE = 1e-8
    MONOTONICITY_SAMPLES = 1000
    STEP_TOLERANCE = 1e-9
    TRACE_TOLERANCE = 1e-12
    ENERGY_SLACK = 1e-12
    DENSE_EIGEN_LIMIT = 1500
    EXIT_OK = 0
    EXIT_GATE = 1
    EXIT_CONFIG = 2
    FAILED_MARKER = "FAILED"
    RUN_LOG = "run.log"
    ENV_OVERRIDES = {
        "output": ["PERIKV_OUTPUT"],
        "seed": ["PERIKV_SEED"],
        "threads": ["PERIKV_THREADS"],
    }


class KelvinVoigtFunctions:
    @staticmethod
    def read_config(path):
        """Load a YAML run configuration and the line number of every key."""
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as err:
            raise ConfigurationError(f"{path}: cannot read config: {to_native(err)}")
        try:
            data = yaml.safe_load(text)
            node = yaml.compose(text, Loader=yaml.SafeLoader)
        except yaml.YAMLError as err:
            mark = getattr(err, "problem_mark", None)
            where = f"{path}:{mark.line + 1}" if mark is not None else path
            problem = getattr(err, "problem", None) or to_native(err)
            raise ConfigurationError(f"{where}: malformed YAML: {problem}")
        if data is None:
            return {}, {}
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}:1: top level must be a mapping")
        return data, KelvinVoigtFunctions.key_lines(node)

    @staticmethod
    def key_lines(node, prefix=()):
        lines = {}
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                path = prefix + (str(key_node.value),)
                lines[path] = key_node.start_mark.line + 1
                lines.update(KelvinVoigtFunctions.key_lines(value_node, path))
        return lines

    @staticmethod
    def apply_overrides(params, flags):
        """Layer environment and command-line values over the file: flag > env > file."""
        merged = dict(params)
        for key, names in KelvinVoigtConstants.ENV_OVERRIDES.items():
            try:
                merged[key] = env_fallback(*names)
            except AnsibleFallbackNotFound:
                pass
        for key, value in flags.items():
            if value is not None:
                merged[key] = value
        return merged

    @staticmethod
    def strictly_decreasing(values):
        values = [float(v) for v in values]
        if len(values) < 2 or not all(np.isfinite(values)):
            return False
        if all(v == 0.0 for v in values):
            return True
        return all(b < a for a, b in zip(values, values[1:]))

    @staticmethod
    def relative_defect(measured, expected):
        scale = max(abs(expected), np.finfo(float).tiny)
        return abs(measured - expected) / scale

    @staticmethod
    def format_value(value):
        if isinstance(value, (bool, np.bool_)):
            return "true" if value else "false"
        if isinstance(value, (float, np.floating)):
            return repr(float(value))
        if isinstance(value, (int, np.integer)):
            return str(int(value))
        return str(value)

    @staticmethod
    def write_csv(path, header, rows):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([KelvinVoigtFunctions.format_value(v) for v in row])
        log.info("wrote %s", path)

    @staticmethod
    def cg_solve(matrix, rhs, x0=None, rtol=None, maxiter=None):
        """Jacobi-preconditioned conjugate gradient; returns (x, iterations)."""
        rtol = KelvinVoigtConstants.CG_RTOL if rtol is None else rtol
        maxiter = KelvinVoigtConstants.CG_MAXITER if maxiter is None else maxiter
        rhs = np.asarray(rhs, dtype=float)
        norm_rhs = np.linalg.norm(rhs)
        if norm_rhs == 0.0:
            return np.zeros_like(rhs), 0
        preconditioner = None
        if scipy.sparse.issparse(matrix):
            diagonal = matrix.diagonal()
            if np.all(diagonal > 0):
                preconditioner = scipy.sparse.diags(1.0 / diagonal)
        counter = {"n": 0}

        def _count(_xk):
            counter["n"] += 1

        try:
            x, info = scipy.sparse.linalg.cg(
                matrix,
                rhs,
                x0=x0,
                rtol=rtol,
                atol=0.0,
                maxiter=maxiter,
                M=preconditioner,
                callback=_count,
            )
        except (ArithmeticError, ValueError) as err:
            # numpy.linalg.LinAlgError is a ValueError
            raise SolverError(
                f"conjugate gradient failed after {counter['n']} iterations: {to_native(err)}",
                iterations=counter["n"],
            ) from err
        if info != 0:
            residual = np.linalg.norm(rhs - matrix @ x) / norm_rhs
            raise SolverError(
                f"conjugate gradient did not converge after {counter['n']} iterations "
                f"(relative residual {residual:.3e}, target {rtol:.1e})",
                iterations=counter["n"],
                residual=residual,
            )
        log.debug("cg converged in %d iterations", counter["n"])
        return x, counter["n"]

    @staticmethod
    def smallest_eigenvalue(matrix, other=None):
        """Smallest eigenvalue of matrix (or of the pencil matrix - lambda*other)."""
        size = matrix.shape[0]
        if size <= KelvinVoigtConstants.DENSE_EIGEN_LIMIT:
            dense = matrix.toarray() if scipy.sparse.issparse(matrix) else matrix
            dense_other = None
            if other is not None:
                dense_other = other.toarray() if scipy.sparse.issparse(other) else other
            values = scipy.linalg.eigh(
                np.asarray(dense),
                None if dense_other is None else np.asarray(dense_other),
                eigvals_only=True,
                subset_by_index=[0, 0],
            )
            return float(values[0])
        values = scipy.sparse.linalg.eigsh(
            matrix, k=1, M=other, sigma=0.0, which="LM", return_eigenvectors=False
        )
        return float(values[0])


class KelvinVoigtOptions:
    @staticmethod
    def argument_spec():
        return dict(
            mode=dict(type="str", choices=["verify", "simulate", "sweep"]),
            domain=dict(
                type="dict",
                apply_defaults=True,
                options=dict(
                    dim=dict(type="int", choices=[2, 3], default=2),
                    lower=dict(type="list", elements="float"),
                    upper=dict(type="list", elements="float"),
                    collar_width=dict(type="float"),
                ),
            ),
            kernel=dict(
                type="dict",
                apply_defaults=True,
                options=dict(
                    profile=dict(
                        type="str",
                        choices=["indicator", "conic", "polynomial", "power"],
                        default="indicator",
                    ),
                    exponent=dict(type="float"),
                    horizon=dict(type="float", default=0.1),
                    horizons=dict(
                        type="list", elements="float", default=[0.2, 0.1, 0.05]
                    ),
                    ratio=dict(type="float", default=4.0),
                    quadrature=dict(
                        type="str",
                        choices=["midpoint", "mass", "moment"],
                        default="moment",
                    ),
                    matrix_free=dict(type="bool", default=False),
                ),
            ),
            material=dict(
                type="dict",
                apply_defaults=True,
                options=dict(
                    alpha=dict(type="float", default=2.0),
                    beta=dict(type="float", default=1.0),
                ),
            ),
            output=dict(type="path", default="output"),
            seed=dict(type="int", default=0),
            threads=dict(type="int", default=1),
            verbosity=dict(type="int", default=0),
        )

    @staticmethod
    def evolution_spec():
        return dict(
            time=dict(
                type="dict",
                apply_defaults=True,
                options=dict(
                    t_final=dict(type="float", default=0.5),
                    dt=dict(type="float", default=1e-3),
                    scheme=dict(
                        type="str",
                        choices=["implicit-euler", "theta"],
                        default="implicit-euler",
                    ),
                    theta=dict(type="float", default=0.5),
                    solver=dict(type="str", choices=["cg", "direct"], default="cg"),
                    sample_every=dict(type="int", default=1),
                    ede_tolerance=dict(type="float", default=1e-2),
                    snapshots=dict(type="int", default=2),
                ),
            ),
            initial_field=dict(
                type="dict",
                apply_defaults=True,
                options=dict(
                    name=dict(
                        type="str",
                        choices=[
                            "zero",
                            "product-of-sines",
                            "bubble",
                            "rigid",
                            "cutoff-identity",
                            "cutoff-rotation",
                        ],
                        default="product-of-sines",
                    ),
                    amplitude=dict(type="float", default=1.0),
                ),
            ),
            reference=dict(
                type="dict",
                apply_defaults=True,
                options=dict(
                    refinement=dict(type="int", default=2),
                    mesh_spacing=dict(type="float"),
                ),
            ),
        )


class KelvinVoigtLogfile:
    """Mirrors the package log into run.log inside the output directory."""

    def __init__(self, directory):
        self.filename = os.path.join(directory, KelvinVoigtConstants.RUN_LOG)
        self.handler = logging.FileHandler(self.filename, mode="a", encoding="utf-8")
        self.handler.setFormatter(
            logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
        )
        self.logger = logging.getLogger("peridynamic_kv")
        self.logger.addHandler(self.handler)
        if self.logger.getEffectiveLevel() > logging.INFO:
            self.logger.setLevel(logging.INFO)

    def write(self, line):
        self.handler.stream.write(line + "\n")
        self.handler.flush()

    def close(self):
        self.logger.removeHandler(self.handler)
        self.handler.close()


class KelvinVoigtModule:
    """Validated run parameters plus the exit_json/fail_json protocol of a command."""

    def __init__(self, argument_spec, params, source="<config>", lines=None):
        self.argument_spec = argument_spec
        self.source = source
        self.lines = lines or {}
        self.logfile = None
        self.output_dir = params.get("output")
        try:
            self._check_unknown_keys(argument_spec, params, ())
            result = ArgumentSpecValidator(argument_spec).validate(params)
            if result.error_messages:
                raise ConfigurationError(
                    f"{self.source}: " + "; ".join(result.error_messages)
                )
            self.params = result.validated_parameters
            self.output_dir = self.params["output"]
            self._check_values()
        except ConfigurationError as err:
            self.fail_json(msg=to_native(err), code=KelvinVoigtConstants.EXIT_CONFIG)
        os.makedirs(self.output_dir, exist_ok=True)
        marker = os.path.join(self.output_dir, KelvinVoigtConstants.FAILED_MARKER)
        if os.path.exists(marker):
            os.remove(marker)
        self.logfile = KelvinVoigtLogfile(self.output_dir)

    def anchor(self, path, message):
        line = self.lines.get(tuple(path))
        where = f"{self.source}:{line}" if line else self.source
        return f"{where}: {'.'.join(path)}: {message}"

    def _check_unknown_keys(self, spec, params, prefix):
        for key, value in params.items():
            path = prefix + (str(key),)
            if key not in spec:
                supported = ", ".join(sorted(spec))
                raise ConfigurationError(
                    self.anchor(path, f"unknown key (supported: {supported})")
                )
            options = spec[key].get("options")
            if options and isinstance(value, dict):
                self._check_unknown_keys(options, value, path)

    def _require(self, path, condition, message):
        if not condition:
            raise ConfigurationError(self.anchor(path, message))

    def _check_values(self):
        params = self.params
        domain = params["domain"]
        dim = domain["dim"]
        for corner in ("lower", "upper"):
            if domain[corner] is None:
                domain[corner] = [0.0 if corner == "lower" else 1.0] * dim
            self._require(
                ("domain", corner),
                len(domain[corner]) == dim,
                f"expected {dim} coordinates, got {len(domain[corner])}",
            )
        self._require(
            ("domain", "upper"),
            all(u > l for l, u in zip(domain["lower"], domain["upper"])),
            "every edge of the box must have positive length",
        )
        kernel = params["kernel"]
        if domain["collar_width"] is None:
            if params.get("mode") == "sweep":
                domain["collar_width"] = max(kernel["horizons"])
            else:
                domain["collar_width"] = kernel["horizon"]
        self._require(
            ("domain", "collar_width"), domain["collar_width"] > 0, "must be > 0"
        )
        self._require(("kernel", "horizon"), kernel["horizon"] > 0, "must be > 0")
        self._require(
            ("kernel", "horizons"),
            all(h > 0 for h in kernel["horizons"]),
            "every horizon must be > 0",
        )
        self._require(("kernel", "ratio"), kernel["ratio"] > 0, "must be > 0")
        for name in ("alpha", "beta"):
            self._require(
                ("material", name), params["material"][name] > 0, "must be > 0"
            )
        self._require(("threads",), params["threads"] >= 1, "must be >= 1")
        time = params.get("time")
        if time is not None:
            self._require(("time", "t_final"), time["t_final"] >= 0, "must be >= 0")
            self._require(("time", "dt"), time["dt"] > 0, "must be > 0")
            self._require(
                ("time", "sample_every"), time["sample_every"] >= 1, "must be >= 1"
            )
            self._require(
                ("time", "ede_tolerance"), time["ede_tolerance"] >= 0, "must be >= 0"
            )
            self._require(("time", "snapshots"), time["snapshots"] >= 0, "must be >= 0")
            if time["scheme"] == "theta":
                self._require(
                    ("time", "theta"),
                    0.5 <= time["theta"] <= 1.0,
                    "must lie in [0.5, 1]",
                )
            self._require(
                ("time", "solver"),
                not (time["solver"] == "direct" and kernel["matrix_free"]),
                "direct solver needs assembled matrices (kernel.matrix_free is set)",
            )
        reference = params.get("reference")
        if reference is not None:
            self._require(
                ("reference", "refinement"),
                reference["refinement"] >= 2,
                "must be >= 2 (reference at least twice the finest grid)",
            )
            spacing = reference["mesh_spacing"]
            self._require(
                ("reference", "mesh_spacing"),
                spacing is None or spacing > 0,
                "must be > 0",
            )

    def path(self, name):
        return os.path.join(self.output_dir, name)

    def _emit(self, result):
        print(json.dumps(result, default=_to_builtin, sort_keys=True))

    def _close(self):
        if self.logfile is not None:
            self.logfile.close()
            self.logfile = None

    def exit_json(self, msg, **kwargs):
        log.info(msg)
        self._close()
        self._emit(dict(failed=False, msg=msg, **kwargs))
        sys.exit(KelvinVoigtConstants.EXIT_OK)

    def fail_json(self, msg, code=KelvinVoigtConstants.EXIT_GATE, error=None, **kwargs):
        log.error(msg)
        error = error or {"Message": msg, "Reason": "failure", "Exit Code": code}
        if self.output_dir:
            try:
                os.makedirs(self.output_dir, exist_ok=True)
                marker = os.path.join(
                    self.output_dir, KelvinVoigtConstants.FAILED_MARKER
                )
                with open(marker, "w", encoding="utf-8") as fh:
                    fh.write(msg + "\n")
            except OSError as err:
                log.warning("could not write failure marker: %s", to_native(err))
        self._close()
        self._emit(dict(failed=True, msg=msg, error=error, **kwargs))
        sys.exit(code)

    def error_json(self, err):
        """Terminate on a lab exception, mapping its class to the exit code."""
        error = {
            "Message": to_native(err),
            "Reason": type(err).__name__,
            "Exit Code": err.exit_code,
        }
        if isinstance(err, SolverError):
            error["Iterations"] = err.iterations
            error["Residual"] = err.residual
        self.fail_json(msg=to_native(err), code=err.exit_code, error=error)


def _to_builtin(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)
