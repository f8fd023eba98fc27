"""
Run configuration for the gof command
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

from django.conf import settings

from apps.core.exceptions import DomainError
from apps.families.serializers import load_family
from apps.sim.services import check_seed

FAMILY_FLAGS = ('d', 'sigma', 's', 'kappa', 'm')

DEFAULT_FORMATS = {
    'enumerate': 'csv',
    'rates': 'csv',
    'extremal': 'json',
    'test': 'json',
    'simulate': 'csv',
}


def _output_path(value):
    if value is None:
        return None
    path = Path(value)
    if path.is_dir():
        raise DomainError(f"Output path {path} is a directory")
    for parent in path.resolve().parents:
        if parent.exists():
            if not parent.is_dir():
                raise DomainError(f"Cannot create {path}: {parent} is not a directory")
            break
    return path


def _input_path(value, flag):
    if value is None:
        return None
    path = Path(value)
    if not path.is_file():
        raise DomainError(f"{flag} file {path} does not exist")
    return path


@dataclass(frozen=True)
class RunConfig:
    """Validated parameters of one gof invocation"""

    command: str
    output_format: str
    seed: int
    workers: int
    out: Optional[Path] = None
    family: Optional[Any] = None
    inputs: Mapping[str, Optional[Path]] = field(default_factory=dict)
    options: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def from_options(cls, options):
        """
        Build a RunConfig from parsed command options

        Raises:
            DomainError: for invalid family flags, paths, seed or workers
        """
        command = options['command']
        seed = options.get('seed')
        seed = check_seed(settings.MINIMAXGOF_DEFAULT_SEED if seed is None else seed)
        workers = options.get('workers')
        workers = settings.MINIMAXGOF_DEFAULT_WORKERS if workers is None else workers
        if workers < 1:
            raise DomainError(f"--workers must be at least 1, got {workers}")

        family = None
        if options.get('family'):
            family = load_family(
                {'variant': options['family'], **{name: options.get(name) for name in FAMILY_FLAGS}}
            )

        inputs = {
            name: _input_path(options.get(name), f"--{name.replace('_', '-')}")
            for name in ('data', 'weights', 'index_set', 'design')
            if name in options
        }
        return cls(
            command=command,
            output_format=options.get('format') or DEFAULT_FORMATS[command],
            seed=seed,
            workers=int(workers),
            out=_output_path(options.get('out')),
            family=family,
            inputs=inputs,
            options=options,
        )

    def require_family(self):
        if self.family is None:
            raise DomainError(f"gof {self.command} needs --family")
        return self.family

    def get(self, name, default=None):
        value = self.options.get(name)
        return default if value is None else value
