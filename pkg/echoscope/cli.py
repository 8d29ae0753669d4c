"""
Command-line front end.

    echoscope analyze  --in capture.pcap --out report.csv
    echoscope classify --in report.csv --out out/ [--profiles p.yaml] [--threshold-*]
    echoscope policy   --in out/ --target hotstar --action block --scope before --out policy.yaml
    echoscope simulate --in policy.yaml --scenario during [--model m.yaml] [--segments N] [--out sim.json]
    echoscope table2   [--segments N] [--out table2.txt]

Exit codes: 0 success, 1 usage error, 2 data error (or table2 deviating
from the reference grid).
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

import yaml

from echoscope.logging.logger import get_logger
from echoscope.exception.exception import ConfigurationError, EchoscopeError, EchoscopeException, UsageError
from echoscope.constants import PROFILES_ENV_VAR, default_profiles_path
from echoscope.entity.config_entity import (
    CaptureConfig,
    ClassifierConfig,
    RunConfig,
    SimulationConfig,
    Subcommand,
)
from echoscope.pipeline.audit_pipeline import AuditPipeline

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _ArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so run() owns the exit code."""

    def error(self, message):
        raise UsageError(message)


def _positive_int(value: str) -> int:
    number = int(value)
    if number <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return number


def _positive_float(value: str) -> float:
    number = float(value)
    if number <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return number


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="echoscope",
        description="Offline TLS side-channel privacy auditor and attack simulator",
        epilog=f"{PROFILES_ENV_VAR} sets the default profile file.",
    )
    subparsers = parser.add_subparsers(dest="subcommand", metavar="{analyze,classify,policy,simulate,table2}")

    def profiles_flag(sub):
        sub.add_argument("--profiles", type=Path, default=None, help="service SNI profile YAML")

    def threshold_flags(sub):
        sub.add_argument("--threshold-primary", type=_positive_int, dest="threshold_primary",
                         help="bytes at or above which a flow is primary")
        sub.add_argument("--threshold-side", type=_positive_int, dest="threshold_side",
                         help="bytes at or below which an unmatched flow is a side channel")
        sub.add_argument("--threshold-session", type=_positive_float, dest="threshold_session",
                         help="seconds; long sessions above the side ceiling are primary")

    analyze = subparsers.add_parser("analyze", help="capture -> CSV flow report")
    analyze.add_argument("--in", dest="input", type=Path, help="pcap or pcapng capture")
    analyze.add_argument("--out", dest="output", type=Path, help="CSV report path")

    classify = subparsers.add_parser("classify", help="flow report -> classification report")
    classify.add_argument("--in", dest="input", type=Path, help="capture, report or directory")
    classify.add_argument("--out", dest="output", type=Path, help="classification JSON or directory")
    profiles_flag(classify)
    threshold_flags(classify)

    policy = subparsers.add_parser("policy", help="classification -> attack policy")
    policy.add_argument("--in", dest="input", type=Path, help="classification report, report, capture or directory")
    policy.add_argument("--out", dest="output", type=Path, help="policy YAML path (stdout when omitted)")
    policy.add_argument("--target", help="service to attack")
    policy.add_argument("--action", choices=["block", "throttle"], default="block")
    policy.add_argument("--rate", type=_positive_int, help="throttle rate in bits/second")
    policy.add_argument("--scope", choices=["before", "during", "always"], default="always")
    profiles_flag(policy)
    threshold_flags(policy)

    simulate = subparsers.add_parser("simulate", help="policy -> simulated playback outcome")
    simulate.add_argument("--in", dest="input", type=Path, help="policy YAML")
    simulate.add_argument("--out", dest="output", type=Path, help="JSON outcome report")
    simulate.add_argument("--model", type=Path, help="service model YAML (default: the policy's target)")
    simulate.add_argument("--scenario", choices=["before", "during"], default="during")
    simulate.add_argument("--segments", type=_positive_int)
    profiles_flag(simulate)

    table2 = subparsers.add_parser("table2", help="regenerate the blocking outcome grid")
    table2.add_argument("--out", dest="output", type=Path, help="write the grid to this file")
    table2.add_argument("--segments", type=_positive_int)
    profiles_flag(table2)

    return parser


def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    if not args.subcommand:
        raise UsageError("a subcommand is required")
    config = RunConfig(
        subcommand=Subcommand(args.subcommand),
        input_path=getattr(args, "input", None),
        output_path=getattr(args, "output", None),
        profiles_path=getattr(args, "profiles", None) or default_profiles_path(),
        model_path=getattr(args, "model", None),
        threshold_primary=getattr(args, "threshold_primary", None),
        threshold_side=getattr(args, "threshold_side", None),
        threshold_session=getattr(args, "threshold_session", None),
        target=getattr(args, "target", None),
        action=getattr(args, "action", "block"),
        rate=getattr(args, "rate", None),
        scope=getattr(args, "scope", "always"),
        scenario=getattr(args, "scenario", "during"),
        segments=getattr(args, "segments", None),
    )
    config.validate()
    return config


def _pipeline(config: RunConfig) -> AuditPipeline:
    classifier_config = None
    simulation_config = None
    if config.subcommand in (Subcommand.CLASSIFY, Subcommand.POLICY):
        try:
            classifier_config = ClassifierConfig.from_yaml(
                profiles_path=config.profiles_path,
                primary_volume_threshold=config.threshold_primary,
                side_volume_ceiling=config.threshold_side,
                session_length_threshold=config.threshold_session,
            )
        except ConfigurationError as e:
            # threshold flags that contradict each other or the config file
            raise UsageError(str(e))
    if config.subcommand in (Subcommand.SIMULATE, Subcommand.TABLE2):
        simulation_config = SimulationConfig.from_yaml()
        simulation_config.profiles_path = config.profiles_path
    capture_config = CaptureConfig.from_yaml()
    return AuditPipeline(capture_config, classifier_config, simulation_config)


def execute(config: RunConfig) -> int:
    pipeline = _pipeline(config)

    if config.subcommand is Subcommand.ANALYZE:
        artifact = pipeline.start_analysis(config.input_path, config.output_path)
        print(artifact.get_status_message())
        print(artifact.report_path)
        return EXIT_OK

    if config.subcommand is Subcommand.CLASSIFY:
        artifact = pipeline.start_classification(config.input_path, config.output_path)
        print(artifact.get_status_message())
        for c in pipeline.classifications:
            service = c.service or "-"
            print(f"{c.flow}\t{c.role.value}\t{service}\t{', '.join(str(e) for e in c.evidence)}")
        return EXIT_OK

    if config.subcommand is Subcommand.POLICY:
        artifact = pipeline.start_policy(
            config.target, config.input_path, config.output_path,
            action=config.action, scope=config.scope, rate=config.rate,
        )
        if config.output_path is None:
            print(yaml.safe_dump(pipeline.policy.to_dict(), sort_keys=False), end="")
        else:
            print(artifact.get_status_message())
        return EXIT_OK

    if config.subcommand is Subcommand.SIMULATE:
        artifact = pipeline.start_simulation(
            config.input_path, config.scenario, model=config.model_path,
            session_segments=config.segments, report_path=config.output_path,
        )
        for key, label in artifact.labels.items():
            print(f"{key}: {label}")
        return EXIT_OK

    artifact = pipeline.run_table2(config.segments, config.output_path)
    print(artifact.table)
    if artifact.mismatches:
        for mismatch in artifact.mismatches:
            print(f"deviation: {mismatch}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = run_config_from_args(args)
    except UsageError as e:
        print(f"echoscope: error: {e.message}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help / --version
        return e.code if isinstance(e.code, int) else EXIT_OK

    try:
        return execute(config)
    except UsageError as e:
        print(f"echoscope: error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except EchoscopeError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"echoscope: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DATA
    except EchoscopeException as e:
        print(f"echoscope: {e}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
