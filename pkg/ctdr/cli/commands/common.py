"""Options, config loading and manifests shared by the study commands."""

import functools
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import click
from joblib import cpu_count

from ctdr.business.dgp import MASK64
from ctdr.business.montecarlo_models import StudyConfig, parse_study_config
from ctdr.cli.output import OutputFormatter
from ctdr.core.errors import CTDRError, ExitCode
from ctdr.core.logging import setup_logging
from ctdr.core.version import Version
from ctdr.integrations.config_file import ConfigFile
from ctdr.integrations.report_io import ensure_directory, write_manifest

MANIFEST_NAME = "manifest.yaml"
SEED_ENV_VAR = "CTDR_SEED"


class SeedParamType(click.ParamType):
    """Unsigned 64-bit master seed, decimal or 0x-prefixed."""

    name = "u64"

    def convert(
        self, value: Any, param: Optional[click.Parameter], ctx: Optional[click.Context]
    ) -> int:
        if isinstance(value, int):
            seed = value
        else:
            try:
                seed = int(str(value).strip(), 0)
            except ValueError:
                self.fail(f"{value!r} is not an integer seed", param, ctx)
        if not 0 <= seed <= MASK64:
            self.fail(f"{value!r} is outside [0, 2**64 - 1]", param, ctx)
        return seed


SEED = SeedParamType()


def safe_command_execution(func: Callable[..., Any]) -> Callable[..., Any]:
    """Map ctdr errors to their exit codes with a CTDR-E<code> message on stderr."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except KeyboardInterrupt:
            click.echo("\n\nOperation cancelled by user.", err=True)
            sys.exit(ExitCode.KEYBOARD_INTERRUPT.value)
        except CTDRError as e:
            click.echo(e.format_error(), err=True)
            sys.exit(e.exit_code.value)
        except click.ClickException:
            raise
        except Exception as e:
            click.echo(f"CTDR-E{ExitCode.GENERAL_ERROR.value}: Unexpected error: {e}", err=True)
            click.echo("\nThis may be a bug; rerun with --verbose for details.", err=True)
            sys.exit(ExitCode.GENERAL_ERROR.value)

    return wrapper


def study_options(func: Callable[..., Any]) -> Callable[..., Any]:
    """Attach --config, --out, --threads, --seed and --verbose."""
    decorators = [
        click.option(
            "--config",
            "-c",
            "config_path",
            required=True,
            type=click.Path(dir_okay=False),
            help="Study configuration file (dotted.key=value lines)",
        ),
        click.option(
            "--out",
            "-o",
            "out_dir",
            required=True,
            type=click.Path(file_okay=False),
            help="Directory for the CSV reports and manifest",
        ),
        click.option(
            "--threads",
            "-t",
            type=click.IntRange(min=1),
            default=cpu_count,
            show_default="machine parallelism",
            help="Worker threads; never changes any output byte",
        ),
        click.option(
            "--seed",
            type=SEED,
            envvar=SEED_ENV_VAR,
            default=None,
            help=f"Master seed overriding run.seed (also read from {SEED_ENV_VAR})",
        ),
        click.option("--verbose", "-v", is_flag=True, help="Enable verbose output"),
    ]
    for decorator in reversed(decorators):
        func = decorator(func)
    return func


@dataclass
class StudyRun:
    """One command invocation: parsed config, output directory and manifest."""

    command: str
    config: StudyConfig
    config_digest: str
    out_dir: Path
    threads: int
    output: OutputFormatter
    started: float = field(default_factory=time.perf_counter)
    outputs: List[Path] = field(default_factory=list)

    @property
    def master_seed(self) -> int:
        return self.config.scenario.master_seed

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def record(self, path: Path) -> Path:
        self.outputs.append(path)
        return path

    def manifest(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "config_digest": self.config_digest,
            "tool_version": Version.get_version(),
            "master_seed": self.master_seed,
            "wall_time_seconds": round(time.perf_counter() - self.started, 3),
            "outputs": [p.name for p in self.outputs],
        }

    def finish(self) -> None:
        """Write the manifest last and list every produced file."""
        self.outputs.append(self.path(MANIFEST_NAME))
        write_manifest(self.manifest(), self.path(MANIFEST_NAME))
        self.output.outputs_written(self.outputs)


def start_run(
    ctx: click.Context,
    command: str,
    config_path: str,
    out_dir: str,
    threads: int,
    seed: Optional[int],
    verbose: bool,
) -> StudyRun:
    """
    Set up logging, read and parse the config and create the output directory.

    Raises:
        ConfigurationError: If the config file is missing or invalid
    """
    verbose = verbose or bool(ctx.obj and ctx.obj.get("verbose", False))
    logger = setup_logging(verbose)
    output = OutputFormatter(verbose)

    config_file = ConfigFile(config_path)
    study = parse_study_config(config_file.read(), seed_override=seed)
    digest = config_file.digest()
    logger.debug(
        "config %s digest %s, master seed %d", config_path, digest, study.scenario.master_seed
    )

    return StudyRun(command, study, digest, ensure_directory(out_dir), threads, output)

