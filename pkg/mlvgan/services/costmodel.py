"""
Analytic cost model.

Closed-form forward FLOPs and intermediate activation memory of the
generator and discriminator stacks, per block, for a given subsampling
rate. Counting conventions:

- convolution: 2 * C_in * C_out * k^d per output element (multiply-add = 2)
  plus one op per output element for the bias
- normalization, activation, pooling, unpooling and additions: one op per
  output element
- activation memory: forward outputs only, 4 bytes per value
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

from ..exceptions import InfeasibleBudgetError
from ..models.layers import downsampled_size
from ..models.schemas import DiscriminatorConfig, ModelConfig

logger = logging.getLogger(__name__)

BYTES_PER_VALUE = 4
MEGABYTE = 2 ** 20


@dataclass
class LayerCost:
    """Cost of one layer (or the sum of several)."""
    name: str
    flops: int = 0
    activation_bytes: int = 0

    def __add__(self, other: "LayerCost") -> "LayerCost":
        return LayerCost("total", self.flops + other.flops, self.activation_bytes + other.activation_bytes)


def total(costs: Iterable[LayerCost]) -> LayerCost:
    result = LayerCost("total")
    for cost in costs:
        result = result + cost
    return result


class _Block:
    """Collects the layers of one block for a batch of ``batch`` samples."""

    def __init__(self, batch: int):
        self.batch = batch
        self.layers: List[LayerCost] = []

    def conv(self, name: str, c_in: int, c_out: int, taps: int, volume: int) -> None:
        outputs = c_out * volume * self.batch
        self.layers.append(LayerCost(name, 2 * c_in * taps * outputs + outputs, outputs * BYTES_PER_VALUE))

    def linear(self, name: str, n_in: int, n_out: int) -> None:
        outputs = n_out * self.batch
        self.layers.append(LayerCost(name, 2 * n_in * outputs + outputs, outputs * BYTES_PER_VALUE))

    def elementwise(self, name: str, values: int, ops_per_value: int = 1) -> None:
        values *= self.batch
        self.layers.append(LayerCost(name, ops_per_value * values, values * BYTES_PER_VALUE))


# ---------------------------------------------------------------- generator


def _up_block(block: _Block, tag: str, c_in: int, c_out: int, frames: int, h: int, w: int) -> None:
    volume = frames * 4 * h * w
    block.elementwise(f"{tag}.unpool", c_in * volume)
    block.conv(f"{tag}.conv1", c_in, c_out, 9, volume)
    block.elementwise(f"{tag}.norm1", c_out * volume)
    block.elementwise(f"{tag}.relu1", c_out * volume)
    block.conv(f"{tag}.conv2", c_out, c_out, 9, volume)
    block.elementwise(f"{tag}.norm2", c_out * volume)
    block.elementwise(f"{tag}.relu2", c_out * volume)
    if c_in != c_out:
        block.conv(f"{tag}.shortcut", c_in, c_out, 1, volume)
    block.elementwise(f"{tag}.add", c_out * volume)


def _render(block: _Block, level: int, c_in: int, c_out: int, frames: int, h: int, w: int) -> None:
    volume = frames * h * w
    block.elementwise(f"render{level}.norm", c_in * volume)
    block.elementwise(f"render{level}.relu", c_in * volume)
    block.conv(f"render{level}.conv", c_in, c_out, 9, volume)
    block.elementwise(f"render{level}.tanh", c_out * volume)


def generator_costs(config: ModelConfig, batch_size: int = 1) -> List[List[LayerCost]]:
    """Per-level layer costs of the training path (level 1 includes FC and CLSTM)."""
    counts = config.frame_counts()
    c0, h0, w0 = config.clstm_channels, config.base_height, config.base_width
    t = config.frames
    blocks = []

    first = _Block(batch_size)
    first.linear("fc", config.latent_dim + config.label_count, c0 * h0 * w0)
    first.linear("fc.zero", config.latent_dim + config.label_count, c0 * h0 * w0)
    # four gate convolutions per step
    first.conv("clstm.gates", 2 * c0, 4 * c0, 9, t * h0 * w0)
    first.elementwise("clstm.state", 2 * c0 * t * h0 * w0, ops_per_value=4)
    first.linear("z_proj", config.latent_dim, config.z_channels)
    first.elementwise("z_concat", (c0 + config.z_channels) * t * h0 * w0)
    blocks.append(first)

    c_in, h, w = c0 + config.z_channels, h0, w0
    index = 0
    for level in range(1, config.levels + 1):
        block = first if level == 1 else _Block(batch_size)
        frames = counts[level - 1]
        for _ in range(config.upsample_blocks[level - 1]):
            c_out = config.channels[index]
            _up_block(block, f"up{index + 1}", c_in, c_out, frames, h, w)
            c_in, h, w = c_out, 2 * h, 2 * w
            index += 1
        if config.render_all_levels or level == config.levels:
            _render(block, level, c_in, config.out_channels, frames, h, w)
        if level > 1:
            blocks.append(block)
    return [b.layers for b in blocks]


# ---------------------------------------------------------------- discriminator


def _down_block(block: _Block, tag: str, c_in: int, c_out: int, shape: Tuple[int, ...],
                first: bool) -> Tuple[int, ...]:
    taps = 3 ** len(shape)
    volume = math.prod(shape)
    out_shape = tuple(downsampled_size(s) for s in shape)
    out_volume = math.prod(out_shape)
    if not first:
        block.elementwise(f"{tag}.relu_in", c_in * volume)
    block.conv(f"{tag}.conv1", c_in, c_out, taps, volume)
    block.elementwise(f"{tag}.relu", c_out * volume)
    block.conv(f"{tag}.conv2", c_out, c_out, taps, volume)
    block.elementwise(f"{tag}.pool", c_out * out_volume)
    if first:
        block.elementwise(f"{tag}.shortcut_pool", c_in * out_volume)
        block.conv(f"{tag}.shortcut", c_in, c_out, 1, out_volume)
    else:
        block.conv(f"{tag}.shortcut", c_in, c_out, 1, volume)
        block.elementwise(f"{tag}.shortcut_pool", c_out * out_volume)
    block.elementwise(f"{tag}.add", c_out * out_volume)
    return out_shape


def sub_discriminator_costs(in_channels: int, channels: Sequence[int], shape: Tuple[int, ...],
                            batch_size: int = 1, conditional: bool = False) -> List[LayerCost]:
    """Layer costs of one sub-discriminator on inputs of ``shape`` ((T, H, W) or (H, W))."""
    block = _Block(batch_size)
    c_in = in_channels
    for i, width in enumerate(channels):
        shape = _down_block(block, f"down{i + 1}", c_in, width, shape, first=(i == 0))
        c_in = width
    volume = math.prod(shape)
    block.elementwise("relu", c_in * volume)
    block.elementwise("sum_pool", c_in)
    block.linear("linear", c_in, 1)
    if conditional:
        block.elementwise("projection", c_in, ops_per_value=2)
    return block.layers


def discriminator_costs(model: ModelConfig, disc: DiscriminatorConfig,
                        batch_size: int = 1) -> List[List[LayerCost]]:
    """Layer costs of every sub-discriminator for the given generator schedule."""
    conditional = model.label_count > 0
    c = model.out_channels
    if disc.kind == "multilevel":
        counts = model.frame_counts()
        return [
            sub_discriminator_costs(
                c, disc.channels, (counts[level - 1],) + model.level_resolution(level),
                batch_size, conditional,
            )
            for level in range(1, model.levels + 1)
        ]
    frames = model.frame_counts()[-1]
    subs = [
        sub_discriminator_costs(c, disc.channels, (frames, model.height, model.width),
                                batch_size, conditional)
    ]
    if disc.kind == "3d+2d":
        subs.append(
            sub_discriminator_costs(c, disc.frame_channels or disc.channels,
                                    (model.height, model.width), batch_size, conditional)
        )
    return subs


# ---------------------------------------------------------------- reports


@dataclass
class CostReport:
    """Per-block costs at one rate, with per-block and total ratios against rate 1."""
    rate: int
    generator: List[List[LayerCost]]
    discriminator: List[List[LayerCost]]
    naive_generator: List[LayerCost] = field(default_factory=list)
    naive_discriminator: List[LayerCost] = field(default_factory=list)

    @property
    def generator_blocks(self) -> List[LayerCost]:
        return [total(layers) for layers in self.generator]

    @property
    def discriminator_blocks(self) -> List[LayerCost]:
        return [total(layers) for layers in self.discriminator]

    @property
    def generator_total(self) -> LayerCost:
        return total(self.generator_blocks)

    @property
    def discriminator_total(self) -> LayerCost:
        return total(self.discriminator_blocks)

    @staticmethod
    def _ratios(naive: Sequence[LayerCost], blocks: Sequence[LayerCost]) -> List[Tuple[float, float]]:
        return [
            (n.flops / b.flops, n.activation_bytes / b.activation_bytes)
            for n, b in zip(naive, blocks)
        ]

    def generator_block_ratios(self) -> List[Tuple[float, float]]:
        return self._ratios(self.naive_generator, self.generator_blocks)

    def discriminator_block_ratios(self) -> List[Tuple[float, float]]:
        return self._ratios(self.naive_discriminator, self.discriminator_blocks)

    def generator_ratio(self) -> Tuple[float, float]:
        return self._ratios([total(self.naive_generator)], [self.generator_total])[0]

    def discriminator_ratio(self) -> Tuple[float, float]:
        return self._ratios([total(self.naive_discriminator)], [self.discriminator_total])[0]


def _at_rate(model: ModelConfig, rate: int) -> ModelConfig:
    return model.model_copy(update={"rate": rate})


def estimate(model: ModelConfig, disc: DiscriminatorConfig, rate: Optional[int] = None,
             batch_size: int = 1) -> CostReport:
    """
    Cost report of the training path at subsampling rate ``rate``
    (the model's own rate when omitted).
    """
    rate = model.rate if rate is None else rate
    if rate < 1:
        raise ValueError(f"rate must be >= 1, got {rate}")
    scheduled = _at_rate(model, rate)
    naive = _at_rate(model, 1)
    return CostReport(
        rate=rate,
        generator=generator_costs(scheduled, batch_size),
        discriminator=discriminator_costs(scheduled, disc, batch_size),
        naive_generator=[total(layers) for layers in generator_costs(naive, batch_size)],
        naive_discriminator=[total(layers) for layers in discriminator_costs(naive, disc, batch_size)],
    )


@dataclass
class TableRow:
    method: str
    gflops: float
    flops_ratio: Optional[float]
    memory_mb: float
    memory_ratio: Optional[float]


def _row(method: str, cost: LayerCost, naive: Optional[LayerCost]) -> TableRow:
    return TableRow(
        method=method,
        gflops=cost.flops / 1e9,
        flops_ratio=None if naive is None else naive.flops / cost.flops,
        memory_mb=cost.activation_bytes / MEGABYTE,
        memory_ratio=None if naive is None else naive.activation_bytes / cost.activation_bytes,
    )


def baseline_rows(model: ModelConfig, disc: DiscriminatorConfig, rates: Sequence[int] = (2, 4),
                  batch_size: int = 1) -> List[TableRow]:
    """
    Comparison table: generator and multi-level discriminator without
    subsampling and at each rate, then the single 3D and 3D + 2D
    discriminators on dense videos.
    """
    model = model.model_copy(update={"render_all_levels": True})
    multilevel = disc.model_copy(update={"kind": "multilevel", "levels": model.levels})
    naive = estimate(model, multilevel, 1, batch_size)
    rows = [_row("Gen (naive impl.)", naive.generator_total, None)]
    for rate in rates:
        report = estimate(model, multilevel, rate, batch_size)
        rows.append(_row(f"Subsampling (s_t={rate})", report.generator_total, naive.generator_total))
    rows.append(_row("Dis (naive impl.)", naive.discriminator_total, None))
    for rate in rates:
        report = estimate(model, multilevel, rate, batch_size)
        rows.append(_row(f"Subsampling (s_t={rate})", report.discriminator_total, naive.discriminator_total))
    dense = model.model_copy(update={"render_all_levels": False, "rate": 1})
    for kind, label in (("single-3d", "3D discriminator"), ("3d+2d", "3D + 2D dis.")):
        costs = discriminator_costs(dense, disc.model_copy(update={"kind": kind}), batch_size)
        rows.append(_row(label, total(total(layers) for layers in costs), None))
    return rows


def format_table(rows: Sequence[TableRow]) -> str:
    """Aligned text table with columns Method, GFlops, Ratio, Memory, Ratio."""
    header = ["Method", "GFlops", "Ratio", "Memory", "Ratio"]
    body = [
        [
            row.method,
            f"{row.gflops:.2f}",
            "" if row.flops_ratio is None else f"{row.flops_ratio:.2f}x",
            f"{row.memory_mb:.0f}",
            "" if row.memory_ratio is None else f"{row.memory_ratio:.2f}x",
        ]
        for row in rows
    ]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = []
    for i, cells in enumerate([header] + body):
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        lines.append(" | ".join([first] + rest))
        if i == 0:
            lines.append("-+-".join("-" * w for w in widths))
    return "\n".join(lines)


def write_csv(rows: Sequence[TableRow], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["method", "gflops", "flops_ratio", "memory_mb", "memory_ratio"])
        for row in rows:
            writer.writerow([
                row.method,
                f"{row.gflops:.6f}",
                "" if row.flops_ratio is None else f"{row.flops_ratio:.6f}",
                f"{row.memory_mb:.6f}",
                "" if row.memory_ratio is None else f"{row.memory_ratio:.6f}",
            ])
    return path


# ---------------------------------------------------------------- planning


@dataclass
class Plan:
    rate: int
    levels: int
    batch_size: int
    peak_bytes: int


def sample_footprint(model: ModelConfig, disc: DiscriminatorConfig, rate: int) -> int:
    """Activation bytes of one training sample through generator and discriminator."""
    report = estimate(model, disc, rate, batch_size=1)
    return report.generator_total.activation_bytes + report.discriminator_total.activation_bytes


def plan(memory_budget_bytes: int, model: ModelConfig, disc: DiscriminatorConfig,
         rates: Sequence[int] = (1, 2, 4), max_batch: int = 256) -> Plan:
    """
    Pick the largest batch size, then the smallest rate, whose activation
    memory fits the budget. The level count is the template's.

    Raises:
        InfeasibleBudgetError: not even one sample fits at any rate
    """
    best: Optional[Plan] = None
    for rate in sorted(rates):
        per_sample = sample_footprint(model, disc, rate)
        batch = min(max_batch, memory_budget_bytes // per_sample)
        if batch < 1:
            continue
        if best is None or batch > best.batch_size:
            best = Plan(rate=rate, levels=model.levels, batch_size=int(batch),
                        peak_bytes=int(batch * per_sample))
    if best is None:
        raise InfeasibleBudgetError(
            f"{memory_budget_bytes} bytes cannot hold a single sample at rates {list(rates)}"
        )
    logger.debug(f"Plan for {memory_budget_bytes} bytes: {best}")
    return best
