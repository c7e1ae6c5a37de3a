"""Declarative layer graphs and receptive-field arithmetic.

Architectures are described in a line-oriented text format, one layer per
line (``#`` starts a comment):

    input <name> channels=<c>
    conv <name> k=<k> s=<s> p=<p> c=<c> from <name>
    pool <name> k=<k> s=<s> [p=<p>] from <name>
    concat <name> from <n1>,<n2>,...
    resadd <name> from <n1>,<n2>[,...]

The graph must be acyclic with exactly one input layer. Receptive fields
follow the single-chain recursion RF' = RF + (k - 1) * jump with
jump' = jump * s, applied in topological order. Merge nodes union the
receptive fields arriving over their branches into ``rf_set`` and require
equal cumulative strides; the scalar receptive field of any layer is the
maximum of its ``rf_set``. Padding never changes the receptive field, only
the offset and the spatial dimensions, which follow
floor((n + 2p - k) / s) + 1 per axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import IncompatibleMergeError, ParseError

__all__ = [
    "LayerSpec",
    "NetGraph",
    "RFInfo",
    "Finding",
    "parse_arch",
    "load_arch",
    "builtin_arch",
    "builtin_arch_names",
    "analyze",
    "analyze_with_findings",
    "receptive_field",
    "validate_variant",
    "with_probe_window",
]

_MERGE_KINDS = ("concat", "resadd")


@dataclass(frozen=True)
class LayerSpec:
    """One node of the layer graph."""

    name: str
    kind: str  # input | conv | pool | concat | resadd
    kernel: int | None = None
    stride: int | None = None
    padding: int | None = None
    channels_out: int | None = None
    inputs: tuple[str, ...] = ()


@dataclass(frozen=True)
class NetGraph:
    """Validated acyclic layer graph with a single input node."""

    layers: dict[str, LayerSpec]
    input_name: str
    topo_order: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.layers)

    def sinks(self) -> list[str]:
        consumed = {src for spec in self.layers.values() for src in spec.inputs}
        return [name for name in self.layers if name not in consumed]


@dataclass(frozen=True)
class RFInfo:
    """Receptive-field facts for one layer.

    ``rf_set`` holds the receptive fields reaching the layer via distinct
    branches; ``receptive_field`` is its maximum. ``offset`` is the input-
    space center of the first output unit (max-RF branch at merges).
    ``spatial_dims`` is (w, h) when an input size was supplied, else None.
    """

    receptive_field: int
    cumulative_stride: int
    offset: float
    rf_set: frozenset[int]
    channels: int | None
    spatial_dims: tuple[int, int] | None


@dataclass(frozen=True)
class Finding:
    """Validation result for one merge node."""

    node: str
    ok: bool
    message: str
    channels: int | None = None
    rf_set: frozenset[int] = field(default_factory=frozenset)


def _parse_int(token: str, key: str, lineno: int, minimum: int) -> int:
    try:
        value = int(token)
    except ValueError:
        raise ParseError(f"line {lineno}: {key}={token!r} is not an integer") from None
    if value < minimum:
        raise ParseError(f"line {lineno}: {key} must be >= {minimum}, got {value}")
    return value


def _parse_kv(tokens: list[str], lineno: int) -> dict[str, str]:
    out: dict[str, str] = {}
    for tok in tokens:
        if "=" not in tok:
            raise ParseError(f"line {lineno}: expected key=value, got {tok!r}")
        key, _, value = tok.partition("=")
        if key in out:
            raise ParseError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def parse_arch(text: str) -> NetGraph:
    """Parse a layer-graph description.

    Raises :class:`ParseError` naming the offending line for unknown kinds,
    duplicate names, dangling input references, cycles, or a missing or
    non-unique input layer.
    """
    layers: dict[str, LayerSpec] = {}
    lines: dict[str, int] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kind = tokens[0]
        if kind not in ("input", "conv", "pool", "concat", "resadd"):
            raise ParseError(f"line {lineno}: unknown layer kind {kind!r}")
        if len(tokens) < 2:
            raise ParseError(f"line {lineno}: missing layer name")
        name = tokens[1]
        if name in layers:
            raise ParseError(f"line {lineno}: duplicate layer name {name!r}")
        rest = tokens[2:]

        inputs: tuple[str, ...] = ()
        if kind != "input":
            if "from" not in rest:
                raise ParseError(f"line {lineno}: missing 'from' clause")
            at = rest.index("from")
            src_tokens = rest[at + 1 :]
            rest = rest[:at]
            if not src_tokens:
                raise ParseError(f"line {lineno}: 'from' names no layers")
            inputs = tuple(s for part in src_tokens for s in part.split(",") if s)
            if not inputs:
                raise ParseError(f"line {lineno}: 'from' names no layers")

        kv = _parse_kv(rest, lineno)

        def require(key: str, minimum: int) -> int:
            if key not in kv:
                raise ParseError(f"line {lineno}: {kind} layer requires {key}=")
            return _parse_int(kv.pop(key), key, lineno, minimum)

        if kind == "input":
            channels = require("channels", 1)
            spec = LayerSpec(name=name, kind=kind, channels_out=channels)
        elif kind == "conv":
            spec = LayerSpec(
                name=name,
                kind=kind,
                kernel=require("k", 1),
                stride=require("s", 1),
                padding=require("p", 0),
                channels_out=require("c", 1),
                inputs=inputs,
            )
        elif kind == "pool":
            kernel = require("k", 1)
            stride = require("s", 1)
            padding = _parse_int(kv.pop("p"), "p", lineno, 0) if "p" in kv else 0
            spec = LayerSpec(
                name=name, kind=kind, kernel=kernel, stride=stride, padding=padding, inputs=inputs
            )
        else:  # concat / resadd
            if len(inputs) < 2:
                raise ParseError(f"line {lineno}: {kind} needs at least 2 inputs")
            spec = LayerSpec(name=name, kind=kind, inputs=inputs)
        if kind != "input" and len(inputs) != len(set(inputs)):
            raise ParseError(f"line {lineno}: repeated input name in 'from' clause")
        if kv:
            raise ParseError(f"line {lineno}: unexpected keys {sorted(kv)}")
        layers[name] = spec
        lines[name] = lineno

    if not layers:
        raise ParseError("empty architecture description")
    input_names = [n for n, spec in layers.items() if spec.kind == "input"]
    if len(input_names) != 1:
        raise ParseError(f"expected exactly one input layer, found {len(input_names)}")

    for name, spec in layers.items():
        for src in spec.inputs:
            if src not in layers:
                raise ParseError(
                    f"line {lines[name]}: layer {name!r} references undefined layer {src!r}"
                )

    # Kahn's algorithm; leftovers mean a cycle.
    indeg = {name: len(spec.inputs) for name, spec in layers.items()}
    consumers: dict[str, list[str]] = {name: [] for name in layers}
    for name, spec in layers.items():
        for src in spec.inputs:
            consumers[src].append(name)
    ready = [n for n, d in indeg.items() if d == 0]
    topo: list[str] = []
    while ready:
        node = ready.pop(0)
        topo.append(node)
        for nxt in consumers[node]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                ready.append(nxt)
    if len(topo) != len(layers):
        stuck = sorted(set(layers) - set(topo))
        raise ParseError(f"cycle detected involving layers {stuck}")

    return NetGraph(layers=layers, input_name=input_names[0], topo_order=tuple(topo))


def load_arch(path) -> NetGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_arch(fh.read())


def builtin_arch_names() -> list[str]:
    from importlib import resources

    files = resources.files("scaledet").joinpath("archs")
    return sorted(p.name[: -len(".arch")] for p in files.iterdir() if p.name.endswith(".arch"))


def builtin_arch(name: str) -> str:
    """Text of a bundled architecture fixture (zf, zf_ml, zf_ms, ...)."""
    from importlib import resources

    res = resources.files("scaledet").joinpath("archs").joinpath(f"{name}.arch")
    if not res.is_file():
        raise KeyError(f"no builtin architecture {name!r}; have {builtin_arch_names()}")
    return res.read_text(encoding="utf-8")


def _out_dim(n: int, kernel: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - kernel) // stride + 1


def _analyze(
    graph: NetGraph,
    input_size: tuple[int, int] | None,
    strict: bool,
) -> tuple[dict[str, RFInfo], list[Finding]]:
    infos: dict[str, RFInfo] = {}
    findings: list[Finding] = []

    for name in graph.topo_order:
        spec = graph.layers[name]
        if spec.kind == "input":
            dims = (int(input_size[0]), int(input_size[1])) if input_size else None
            infos[name] = RFInfo(
                receptive_field=1,
                cumulative_stride=1,
                offset=0.5,
                rf_set=frozenset({1}),
                channels=spec.channels_out,
                spatial_dims=dims,
            )
            continue

        if spec.kind in ("conv", "pool"):
            src = infos[spec.inputs[0]]
            k, s, p = spec.kernel, spec.stride, spec.padding
            jump = src.cumulative_stride
            rf_set = frozenset(r + (k - 1) * jump for r in src.rf_set)
            dims = None
            if src.spatial_dims is not None:
                dims = (
                    _out_dim(src.spatial_dims[0], k, s, p),
                    _out_dim(src.spatial_dims[1], k, s, p),
                )
                if dims[0] < 1 or dims[1] < 1:
                    msg = f"layer {name!r} output dims {dims} are not positive"
                    if strict:
                        raise IncompatibleMergeError(msg)
                    findings.append(Finding(node=name, ok=False, message=msg))
                    dims = (max(dims[0], 1), max(dims[1], 1))
            channels = spec.channels_out if spec.kind == "conv" else src.channels
            infos[name] = RFInfo(
                receptive_field=max(rf_set),
                cumulative_stride=jump * s,
                offset=src.offset + ((k - 1) / 2 - p) * jump,
                rf_set=rf_set,
                channels=channels,
                spatial_dims=dims,
            )
            continue

        # Merge node: union receptive fields, require consistent stride/dims.
        branches = [infos[src] for src in spec.inputs]
        strides = {b.cumulative_stride for b in branches}
        problems: list[str] = []
        if len(strides) > 1:
            msg = (
                f"merge {name!r}: branch strides differ "
                f"({[b.cumulative_stride for b in branches]})"
            )
            if strict:
                raise IncompatibleMergeError(msg)
            problems.append(msg)
        dims = None
        if all(b.spatial_dims is not None for b in branches):
            dim_set = {b.spatial_dims for b in branches}
            if len(dim_set) > 1:
                msg = f"merge {name!r}: branch spatial dims differ ({sorted(dim_set)})"
                if strict:
                    raise IncompatibleMergeError(msg)
                problems.append(msg)
            dims = branches[0].spatial_dims
        if spec.kind == "concat":
            channels = sum(b.channels or 0 for b in branches)
        else:
            chan_set = {b.channels for b in branches}
            if len(chan_set) > 1:
                problems.append(
                    f"resadd {name!r}: branch channels differ ({sorted(c or 0 for c in chan_set)})"
                )
            channels = branches[0].channels
        rf_set = frozenset().union(*(b.rf_set for b in branches))
        deepest = max(branches, key=lambda b: b.receptive_field)
        infos[name] = RFInfo(
            receptive_field=max(rf_set),
            cumulative_stride=branches[0].cumulative_stride,
            offset=deepest.offset,
            rf_set=rf_set,
            channels=channels,
            spatial_dims=dims,
        )
        if problems:
            findings.append(
                Finding(
                    node=name,
                    ok=False,
                    message="; ".join(problems),
                    channels=channels,
                    rf_set=rf_set,
                )
            )
        else:
            findings.append(
                Finding(
                    node=name,
                    ok=True,
                    message=f"merge {name!r} ok: channels={channels}, "
                    f"rf_set={{{', '.join(str(r) for r in sorted(rf_set))}}}",
                    channels=channels,
                    rf_set=rf_set,
                )
            )

    return infos, findings


def analyze(graph: NetGraph, input_size: tuple[int, int] | None = None) -> dict[str, RFInfo]:
    """RFInfo for every layer, strict: merge inconsistencies raise."""
    infos, _ = _analyze(graph, input_size, strict=True)
    return infos


def analyze_with_findings(
    graph: NetGraph, input_size: tuple[int, int] | None = None
) -> tuple[dict[str, RFInfo], list[Finding]]:
    """Lenient analysis: inconsistencies become findings, never exceptions."""
    return _analyze(graph, input_size, strict=False)


def receptive_field(
    graph: NetGraph, layer: str, input_size: tuple[int, int] | None = None
) -> RFInfo:
    """RFInfo of one layer.

    Raises KeyError for unknown layers and :class:`IncompatibleMergeError`
    when a merge on the path has mismatched branch strides (or spatial dims,
    when an input size is given).
    """
    if layer not in graph.layers:
        raise KeyError(f"no layer named {layer!r}")
    return analyze(graph, input_size)[layer]


def validate_variant(graph: NetGraph, input_w: int, input_h: int) -> list[Finding]:
    """Check every merge node at a concrete input size.

    Concat requires equal branch spatial dims (channels add); resadd
    additionally requires equal channels. Violations come back as findings,
    never as exceptions.
    """
    _, findings = analyze_with_findings(graph, (int(input_w), int(input_h)))
    return findings


def with_probe_window(
    graph: NetGraph, probe_name: str = "rpn_window", kernel: int = 3, channels: int = 256
) -> NetGraph:
    """Return a copy of the graph with a k x k sliding-window layer appended
    to its single sink, mirroring a proposal head's first convolution."""
    if probe_name in graph.layers:
        raise ParseError(f"graph already has a layer named {probe_name!r}")
    sinks = graph.sinks()
    if len(sinks) != 1:
        raise ParseError(f"probe needs a single sink layer, graph has {sinks}")
    layers = dict(graph.layers)
    layers[probe_name] = LayerSpec(
        name=probe_name,
        kind="conv",
        kernel=kernel,
        stride=1,
        padding=(kernel - 1) // 2,
        channels_out=channels,
        inputs=(sinks[0],),
    )
    return NetGraph(
        layers=layers, input_name=graph.input_name, topo_order=graph.topo_order + (probe_name,)
    )
