from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

SCHEMA_VERSION = 1


@dataclass
class SimStats:
    seed: int = 0
    until: int = 0
    events_injected: int = 0
    events_delivered: int = 0  # one per HICANN copy
    events_delivered_unique: int = 0
    events_dropped: int = 0
    events_dropped_source: int = 0
    events_dropped_dest: int = 0
    events_unroutable: int = 0
    events_in_flight: int = 0
    deadline_misses: int = 0
    packets_sent: int = 0
    packets_delivered: int = 0
    throughput: float = 0.0  # unique events delivered per cycle
    mean_packet_occupancy: float = 0.0
    latency_mean: float = 0.0
    latency_max: int = 0
    latency_bound_violations: int = 0
    ring_stall_cycles: int = 0
    ring_high_water: int = 0
    forced_drains: int = 0
    consistency_violations: int = 0
    flushes: dict = field(default_factory=dict)
    link_utilization: dict = field(default_factory=dict)
    packet_occupancy: dict = field(default_factory=dict)
    latency_histogram: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @property
    def deadline_miss_rate(self) -> float:
        return self.deadline_misses / self.events_delivered_unique if self.events_delivered_unique else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("flushes", "link_utilization", "packet_occupancy", "latency_histogram"):
            d[key] = {str(k): v for k, v in sorted(d[key].items(), key=lambda kv: _sort_key(kv[0]))}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "value"])
        for key, value in sorted(self.to_dict().items()):
            if isinstance(value, dict):
                for sub, v in value.items():
                    writer.writerow([f"{key}.{sub}", v])
            else:
                writer.writerow([key, value])
        return buf.getvalue()

    def summary(self) -> str:
        return (
            f"delivered={self.events_delivered} injected={self.events_injected} "
            f"deadline_miss_rate={self.deadline_miss_rate:.4f} "
            f"mean_packet_occupancy={self.mean_packet_occupancy:.2f}"
        )


def _sort_key(k):
    return (0, k, "") if isinstance(k, int) else (1, 0, str(k))
