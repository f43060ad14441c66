"""Service configuration."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SidecarConfig:
    """Settings for one service instance.

    ``model`` is a checkpoint path or hub id and has no default: picking an
    encoder is an explicit operator decision, never an implicit download.
    """

    model: str
    host: str = "127.0.0.1"
    port: int = 8230
    max_batch: int = 64
    device: str = "cpu"

    def __post_init__(self) -> None:
        if not self.model:
            raise ValueError("model must be a non-empty checkpoint path or id")
        if not 0 <= self.port <= 65535:
            raise ValueError(f"port {self.port} is out of range")
        # max_batch >= 1: a server that cannot take a single text serves nothing
        if self.max_batch < 1:
            raise ValueError(f"max_batch must be >= 1, got {self.max_batch}")
        if not self.device:
            raise ValueError("device must be non-empty")
