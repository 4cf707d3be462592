"""Flat ``KEY=value`` configuration files for experiments.

Files are parsed with ``dotenv_values``; keys are case-insensitive and name
fields of the target model. Keys prefixed with ``W2_`` configure the nested
``W2Protocol``. Variables of the process environment prefixed with
``OCCUPATION_`` override file values.

Example file::

    MANIFOLD=torus:d=5,s=1
    T_GRID=256,512,1024,2048
    REPLICAS=8
    W2_SOLVER=entropic
    W2_N_REF=2000
    W2_N_EST=2000
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Type, TypeVar, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ValidationError

from .exceptions import InputError
from .models.experiment import ExperimentConfig, W2Protocol

logger = logging.getLogger(__name__)

ENV_PREFIX = "OCCUPATION_"
PROTOCOL_PREFIX = "w2_"

_SEQUENCE_FIELDS = {"t_grid", "initial_point", "epsilons", "amplitude_fractions"}

ModelT = TypeVar("ModelT", bound=BaseModel)


def _split(value: str) -> list:
    return [item.strip() for item in value.strip("()[] ").split(",") if item.strip()]


def _coerce(name: str, value: Optional[str]) -> Any:
    if value is None or value.strip() == "":
        return None
    if name in _SEQUENCE_FIELDS:
        return _split(value)
    return value.strip()


def _environment_overrides(environ: Mapping[str, str]) -> Dict[str, str]:
    return {key[len(ENV_PREFIX) :]: value for key, value in environ.items() if key.startswith(ENV_PREFIX)}


def config_from_mapping(model: Type[ModelT], values: Mapping[str, Optional[str]]) -> ModelT:
    """Build ``model`` from string key-value pairs.

    Raises:
        InputError: On unknown keys or values the model rejects.
    """
    fields: Dict[str, Any] = {}
    protocol: Dict[str, Any] = {}
    nested = "protocol" in model.model_fields
    for raw_key, raw_value in values.items():
        key = raw_key.strip().lower()
        if nested and key.startswith(PROTOCOL_PREFIX):
            name = key[len(PROTOCOL_PREFIX) :]
            if name not in W2Protocol.model_fields:
                raise InputError(f"Unknown W2 protocol key {raw_key!r}", {"key": raw_key})
            protocol[name] = _coerce(name, raw_value)
            continue
        if key not in model.model_fields or key == "protocol":
            raise InputError(
                f"Unknown configuration key {raw_key!r} for {model.__name__}",
                {"key": raw_key, "known": sorted(model.model_fields)},
            )
        fields[key] = _coerce(key, raw_value)
    if protocol:
        fields["protocol"] = {k: v for k, v in protocol.items() if v is not None}
    fields = {k: v for k, v in fields.items() if v is not None}
    try:
        return model(**fields)
    except ValidationError as exc:
        raise InputError(
            f"Invalid {model.__name__}: {exc.error_count()} error(s); {exc.errors()[0]['msg']}",
            {"errors": [str(e["loc"]) + ": " + e["msg"] for e in exc.errors()]},
        ) from exc


def load_config(
    path: Optional[Union[str, Path]] = None,
    model: Type[ModelT] = ExperimentConfig,  # type: ignore[assignment]
    overrides: Optional[Mapping[str, Optional[str]]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> ModelT:
    """Load a configuration file, then apply environment and explicit overrides.

    Precedence, lowest first: the file, ``OCCUPATION_*`` environment
    variables, ``overrides``.

    Raises:
        InputError: If the file is missing, or on unknown keys and invalid values.
    """
    values: Dict[str, Optional[str]] = {}
    if path is not None:
        file = Path(path)
        if not file.is_file():
            raise InputError(f"Configuration file not found: {file}", {"path": str(file)})
        values.update({k.lower(): v for k, v in dotenv_values(file).items()})
        logger.debug("Read %d keys from %s", len(values), file)
    env = _environment_overrides(os.environ if environ is None else environ)
    if env:
        logger.info("Applying %d %s* environment overrides", len(env), ENV_PREFIX)
        values.update({k.lower(): v for k, v in env.items()})
    if overrides:
        values.update({k.lower(): v for k, v in overrides.items()})
    return config_from_mapping(model, values)
