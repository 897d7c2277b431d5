import logging
import time
from typing import Any, Dict, List, Optional, Tuple

from pyee.base import EventEmitter

logger = logging.getLogger(__name__)

STAGE_EVENTS = {
    "transe.epoch": "transe",
    "agg.epoch": "agg",
    "dec.epoch": "dec",
}


class LossHistory:
    """Mean training loss per epoch, keyed by stage tag."""

    def __init__(self):
        self._records: Dict[str, List[Tuple[int, float]]] = {}

    def record(self, stage: str, epoch: int, loss: float) -> None:
        self._records.setdefault(stage, []).append((epoch, loss))

    def get(self, stage: str) -> List[Tuple[int, float]]:
        return list(self._records.get(stage, []))

    def stages(self) -> List[str]:
        return sorted(self._records)


def notify(bus: Optional[EventEmitter], event: str, **payload: Any) -> None:
    if bus is not None:
        bus.emit(event, payload)


def create_bus() -> EventEmitter:
    return EventEmitter()


def wire_events(
    bus: EventEmitter,
    history: Optional[LossHistory] = None,
    *,
    log_every: int = 10,
) -> LossHistory:
    """
    Register logging handlers and the loss recorder on the stage bus.
    Training loops only emit; everything user-visible happens here.
    """
    history = history if history is not None else LossHistory()
    started: Dict[str, float] = {}

    @bus.on("stage.start")
    def _stage_start(payload: Dict[str, Any]) -> None:
        started[payload["stage"]] = time.monotonic()
        logger.info("[pipeline] stage %s started", payload["stage"])

    @bus.on("stage.done")
    def _stage_done(payload: Dict[str, Any]) -> None:
        stage = payload["stage"]
        elapsed = time.monotonic() - started.pop(stage, time.monotonic())
        extra = {k: v for k, v in payload.items() if k != "stage"}
        logger.info("[pipeline] stage %s done in %.1fs %s", stage, elapsed, extra or "")

    def _epoch_handler(tag: str):
        def handler(payload: Dict[str, Any]) -> None:
            epoch, loss = int(payload["epoch"]), float(payload["loss"])
            history.record(tag, epoch, loss)
            total = payload.get("epochs")
            if epoch == 1 or epoch == total or (log_every > 0 and epoch % log_every == 0):
                logger.info("[%s] epoch=%d/%s loss=%.6f", tag, epoch, total or "?", loss)
            else:
                logger.debug("[%s] epoch=%d loss=%.6f", tag, epoch, loss)

        return handler

    for event, tag in STAGE_EVENTS.items():
        bus.add_listener(event, _epoch_handler(tag))

    @bus.on("transe.validation")
    def _validation(payload: Dict[str, Any]) -> None:
        logger.info(
            "[transe] epoch=%d validation raw MRR=%.4f (best %.4f)", payload["epoch"], payload["mrr"], payload["best"]
        )

    @bus.on("transe.early_stop")
    def _early_stop(payload: Dict[str, Any]) -> None:
        logger.info(
            "[transe] early stop at epoch=%d; restoring epoch=%d (MRR=%.4f)",
            payload["epoch"],
            payload["best_epoch"],
            payload["best"],
        )

    @bus.on("error")
    def _error(err: Exception) -> None:
        logger.error("[pipeline] event handler failed: %s", err)

    return history
