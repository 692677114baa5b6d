import hashlib
import json
from typing import Any, Dict

import numpy as np
from pydantic import BaseModel, ConfigDict


class SpecModelBase(BaseModel):
    """Declarative input block: unknown keys are rejected, instances are immutable."""
    model_config = ConfigDict(extra='forbid', frozen=True)

    def to_json(self) -> str:
        return self.model_dump_json()

    def digest(self) -> str:
        """sha256 over the canonical JSON dump (sorted keys)."""
        canonical = json.dumps(self.model_dump(mode='json'), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


class ReportModelBase(BaseModel):
    """Result record emitted to JSON."""
    model_config = ConfigDict(extra='forbid', arbitrary_types_allowed=True)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)


def jsonable(value: Any) -> Any:
    """
    Convert numpy scalars and arrays nested in dicts/lists to plain python.

    :param value:
    :return:
    """
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def dump_json(path, payload: Dict[str, Any]):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(jsonable(payload), f, indent=2, sort_keys=True)
