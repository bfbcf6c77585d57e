"""
Sectioned key = value configuration files.

One format serves parameter libraries, fit configs and bench scenarios:

    # comment
    version = 1.0
    [model CryoNMOS-ref]
    vth0 = 0.1008
    ...

Section headers are "[kind]" or "[kind name]". Errors carry the file path
and the 1-based line number.
"""

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from pydantic import BaseModel, Field, ValidationError

from app.core.error_handlers import ParseError
from app.schemas.device import DeviceGeometry, ModelParams, ReferenceParamLibrary
from app.schemas.physics import ChannelDoping, MosStack

logger = logging.getLogger(__name__)

SIG_DIGITS = 9


class Section(BaseModel):
    kind: str
    name: Optional[str] = None
    line: int
    entries: Dict[str, Tuple[str, int]] = Field(default_factory=dict)

    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        entry = self.entries.get(key)
        return entry[0] if entry else default

    def list_of(self, key: str) -> List[str]:
        value = self.get(key)
        if value is None:
            return []
        return [part.strip() for part in value.split(",") if part.strip()]


class ConfigDocument(BaseModel):
    path: str
    version: Optional[str] = None
    version_line: int = 0
    sections: List[Section] = Field(default_factory=list)

    def find(self, kind: str) -> List[Section]:
        return [s for s in self.sections if s.kind == kind]

    def first(self, kind: str) -> Optional[Section]:
        found = self.find(kind)
        return found[0] if found else None


def format_float(value: float, digits: int = SIG_DIGITS) -> str:
    return f"{value:.{digits}g}"


def parse_config_text(text: str, path: str = "<string>") -> ConfigDocument:
    doc = ConfigDocument(path=path)
    current: Optional[Section] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(path, lineno, f"Malformed section header: {line}")
            header = line[1:-1].split(None, 1)
            if not header:
                raise ParseError(path, lineno, "Empty section header")
            current = Section(kind=header[0], name=header[1].strip() if len(header) > 1 else None,
                              line=lineno)
            doc.sections.append(current)
            continue
        if "=" not in line:
            raise ParseError(path, lineno, f"Expected 'key = value', got: {line}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError(path, lineno, "Missing key before '='")
        if current is None:
            if key != "version":
                raise ParseError(path, lineno, f"Key '{key}' appears outside any section")
            doc.version = value
            doc.version_line = lineno
            continue
        if key in current.entries:
            raise ParseError(path, lineno, f"Duplicate key '{key}' in [{current.kind}]")
        current.entries[key] = (value, lineno)
    return doc


def read_config(path) -> ConfigDocument:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        logger.error(f"Cannot read {path}: {e}")
        raise ParseError(str(path), 0, f"Cannot read file: {e.strerror}")
    return parse_config_text(text, str(path))


def _build(model_cls, section: Section, path: str, allowed: Iterable[str], extra: Dict = None):
    allowed = set(allowed)
    for key, (_, lineno) in section.entries.items():
        if key not in allowed:
            raise ParseError(path, lineno, f"Unknown key '{key}' in [{section.kind}]")
    values = {k: v for k, (v, _) in section.entries.items()}
    values.update(extra or {})
    try:
        return model_cls(**values)
    except ValidationError as e:
        first = e.errors()[0]
        key = str(first["loc"][0]) if first["loc"] else section.kind
        lineno = section.entries.get(key, (None, section.line))[1]
        if first["type"] == "missing":
            raise ParseError(path, section.line, f"Missing required key '{key}' in [{section.kind}]")
        raise ParseError(path, lineno, f"Invalid value for '{key}': {first['msg']}")


def model_params_from_section(section: Section, path: str) -> ModelParams:
    return _build(ModelParams, section, path, ModelParams.model_fields)


def geometry_from_section(section: Section, path: str) -> DeviceGeometry:
    return _build(DeviceGeometry, section, path, DeviceGeometry.model_fields)


STACK_KEYS = ("v_fb", "c_ox", "depletion_doping")
DOPING_KEYS = tuple(ChannelDoping.model_fields)


def stack_from_section(section: Section, path: str) -> MosStack:
    doping_section = Section(kind=section.kind, name=section.name, line=section.line,
                             entries={k: v for k, v in section.entries.items() if k in DOPING_KEYS})
    stack_section = Section(kind=section.kind, name=section.name, line=section.line,
                            entries={k: v for k, v in section.entries.items() if k not in DOPING_KEYS})
    doping = _build(ChannelDoping, doping_section, path, DOPING_KEYS)
    return _build(MosStack, stack_section, path, STACK_KEYS, extra={"doping": doping})


class ParameterFile(BaseModel):
    version: str
    geometry: Optional[DeviceGeometry] = None
    models: Dict[str, ModelParams] = Field(default_factory=dict)
    stacks: Dict[str, MosStack] = Field(default_factory=dict)


def parse_parameter_document(doc: ConfigDocument) -> ParameterFile:
    if doc.version is None:
        raise ParseError(doc.path, 1, "Missing 'version' line")
    models: Dict[str, ModelParams] = {}
    stacks: Dict[str, MosStack] = {}
    geometry = None
    for section in doc.sections:
        if section.kind == "model":
            if not section.name:
                raise ParseError(doc.path, section.line, "[model] sections need a name")
            if section.name in models:
                raise ParseError(doc.path, section.line, f"Duplicate model '{section.name}'")
            models[section.name] = model_params_from_section(section, doc.path)
        elif section.kind == "geometry":
            geometry = geometry_from_section(section, doc.path)
        elif section.kind == "stack":
            stacks[section.name or "default"] = stack_from_section(section, doc.path)
        else:
            raise ParseError(doc.path, section.line, f"Unknown section kind '{section.kind}'")
    return ParameterFile(version=doc.version, geometry=geometry, models=models, stacks=stacks)


def read_parameter_file(path) -> ParameterFile:
    return parse_parameter_document(read_config(path))


def _value_text(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format_float(value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def _section_lines(header: str, values: Dict) -> List[str]:
    lines = [f"[{header}]"]
    for key, value in values.items():
        if value is None:
            continue
        lines.append(f"{key} = {_value_text(value)}")
    return lines


def dump_parameter_file(pf: ParameterFile) -> str:
    """Text form of a parameter file; floats use 9 significant digits."""
    lines = [f"version = {pf.version}", ""]
    if pf.geometry is not None:
        lines += _section_lines("geometry", pf.geometry.model_dump()) + [""]
    for name in sorted(pf.models):
        lines += _section_lines(f"model {name}", pf.models[name].model_dump()) + [""]
    for name in sorted(pf.stacks):
        stack = pf.stacks[name]
        values = stack.model_dump(exclude={"doping"})
        values.update(stack.doping.model_dump())
        lines += _section_lines(f"stack {name}", values) + [""]
    return "\n".join(lines).rstrip("\n") + "\n"


def write_parameter_file(pf: ParameterFile, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_parameter_file(pf), encoding="utf-8")
    logger.info(f"Wrote parameter file {path}")
    return path


def library_to_parameter_file(library: ReferenceParamLibrary) -> ParameterFile:
    return ParameterFile(version=library.version, geometry=library.geometry, models=dict(library.sets))
