"""Layer geometry, kernel configuration, MLC planning and TCDM layout."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..engine.memory import TCDM_BASE, TCDM_SIZE
from ..isa import simd_fmt_code
from ..tensor import LayerSpec, Precision, QuantParams, U8, I8
from ..mlc import rollback_for

MODES = ("flexv", "xpulpv2")
UNROLLS = {"4x4": (4, 4), "4x2": (4, 2)}
SLACK = 16


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class ConvGeometry:
    """Convolution with per-side padding (tiles at a tensor border pad on one side only)."""
    in_h: int
    in_w: int
    cin: int
    cout: int
    kh: int = 3
    kw: int = 3
    stride: int = 1
    pad_t: int = 1
    pad_l: int = 1
    pad_b: int = 1
    pad_r: int = 1

    @classmethod
    def from_layer(cls, layer: LayerSpec) -> "ConvGeometry":
        p = layer.padding
        return cls(layer.in_h, layer.in_w, layer.cin, layer.cout, layer.kh, layer.kw,
                   layer.stride, p, p, p, p)

    @property
    def out_h(self) -> int:
        return (self.in_h + self.pad_t + self.pad_b - self.kh) // self.stride + 1

    @property
    def out_w(self) -> int:
        return (self.in_w + self.pad_l + self.pad_r - self.kw) // self.stride + 1

    @property
    def k(self) -> int:
        return self.kh * self.kw * self.cin

    @property
    def pixels(self) -> int:
        return self.out_h * self.out_w

    @property
    def macs(self) -> int:
        return self.pixels * self.cout * self.k


@dataclass(frozen=True)
class KernelConfig:
    geom: ConvGeometry
    act: Precision = U8
    weight: Precision = I8
    quant: QuantParams = QuantParams(1, 0, 0)
    mode: str = "flexv"
    unroll: str | None = None
    cores: int = 8
    overrides: tuple = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise KernelError(f"unknown ISA mode {self.mode!r}")
        if self.unroll is None:
            object.__setattr__(self, "unroll", "4x4" if self.mode == "flexv" else "4x2")
        if self.unroll not in UNROLLS:
            raise KernelError(f"unknown unroll {self.unroll!r}")
        if self.mode == "xpulpv2" and self.unroll == "4x4":
            raise KernelError("4x4 unrolling needs the NN register file (flexv mode)")
        if self.act.bits < self.weight.bits:
            raise KernelError("activations narrower than weights are not supported")
        if self.act.bits not in (2, 4, 8) or self.weight.bits not in (2, 4, 8):
            raise KernelError("operand precisions must be 2, 4 or 8 bits")
        if not 1 <= self.cores <= 8:
            raise KernelError("cluster has 1 to 8 cores")
        if self.mode == "xpulpv2" and self.act.signed and not self.weight.signed:
            raise KernelError("xpulpv2 has no signed-activation, unsigned-weight dot product")

    @classmethod
    def from_layer(cls, layer: LayerSpec, **kw) -> "KernelConfig":
        return cls(ConvGeometry.from_layer(layer), layer.act, layer.weight, layer.quant, **kw)

    @property
    def name(self) -> str:
        return f"a{self.act.bits}w{self.weight.bits}"

    @property
    def main_unroll(self) -> tuple:
        return UNROLLS[self.unroll]


@dataclass(frozen=True)
class Layout:
    input: int
    weights: int
    output: int
    buffers: tuple
    end: int
    input_bytes: int
    weight_bytes: int
    output_bytes: int


@dataclass(frozen=True)
class KernelPlan:
    csr: dict
    kpad: int
    fsize: int
    bufsize: int
    k_iters: int
    chunks: int
    n_bufs: int
    partition: tuple
    layout: Layout
    leftover: dict = field(default_factory=dict)


def pad_k(k: int, pw: int) -> int:
    per = 32 // pw
    return -(-k // per) * per


def partition_rows(out_h: int, out_w: int, cores: int) -> tuple:
    """Contiguous output-row ranges per core, as flattened pixel ranges."""
    base, extra = divmod(out_h, cores)
    out, row = [], 0
    for c in range(cores):
        n = base + (c < extra)
        out.append((row * out_w, (row + n) * out_w))
        row += n
    return tuple(out)


def _align(v: int, a: int = 4) -> int:
    return -(-v // a) * a


def plan_matmul(cfg: KernelConfig) -> KernelPlan:
    g, pa, pw = cfg.geom, cfg.act.bits, cfg.weight.bits
    if (g.cin * pa) % 8 or (g.cin * pw) % 8:
        raise KernelError(f"cin={g.cin} is not byte-aligned at a{pa}w{pw}")
    if (g.cout * cfg.quant.out.bits) % 8:
        raise KernelError(f"cout={g.cout} is not byte-aligned at {cfg.quant.out.bits}-bit output")
    kpad = pad_k(g.k, pw)
    fsize = kpad * pw // 8
    bufsize = kpad * pa // 8
    k_iters = kpad * pa // 32
    chunks = kpad * pw // 32
    n_bufs = 4 if cfg.unroll == "4x4" else 2
    in_bytes = g.in_h * g.in_w * g.cin * pa // 8
    w_bytes = g.cout * fsize
    out_bytes = g.pixels * g.cout * cfg.quant.out.bits // 8
    a_in = TCDM_BASE
    a_w = _align(a_in + in_bytes + SLACK)
    a_out = _align(a_w + w_bytes + SLACK)
    a_buf = _align(a_out + out_bytes + SLACK)
    bufs = []
    for c in range(cfg.cores):
        bufs.append(tuple(a_buf + (c * n_bufs + i) * bufsize for i in range(n_bufs)))
    end = a_buf + cfg.cores * n_bufs * bufsize + SLACK
    if end > TCDM_BASE + TCDM_SIZE:
        raise KernelError(f"layer needs {end - TCDM_BASE} bytes of TCDM, have {TCDM_SIZE}")
    layout = Layout(a_in, a_w, a_out, tuple(bufs), end, in_bytes, w_bytes, out_bytes)
    ratio = pa // pw
    csr = {
        "simd_fmt": simd_fmt_code(pa, pw),
        "simd_sign": int(cfg.act.signed) | (int(cfg.weight.signed) << 1),
        "mix_skip": ratio,
        "macload_en": int(cfg.mode == "flexv" and cfg.unroll == "4x4"),
        "w_stride": fsize,
        "w_skip": 4,
        "w_rollback": rollback_for(fsize, 4, 4),
        "a_stride": bufsize,
        "a_skip": 4,
        "a_rollback": rollback_for(bufsize, 4, 4),
    }
    for k, v in cfg.overrides:
        if k not in csr:
            raise KernelError(f"unknown plan override {k!r}")
        csr[k] = v
    F, P = cfg.main_unroll
    leftover = {"filters": g.cout % F, "pixel_unroll": P}
    return KernelPlan(csr, kpad, fsize, bufsize, k_iters, chunks, n_bufs,
                      partition_rows(g.out_h, g.out_w, cfg.cores), layout, leftover)


def with_overrides(cfg: KernelConfig, **kw) -> KernelConfig:
    return replace(cfg, overrides=tuple(sorted(kw.items())))
