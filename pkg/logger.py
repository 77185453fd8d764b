"""
PhaseGen - Logging System
Session logging for PhaseGen runs: a human-readable log file, console output,
a structured JSON event log and a session data file with performance metrics.
Library modules log through children of the "phasegen" logger, so their
messages reach the session handlers once a session exists.
"""

import json
import logging
import os
import time
from datetime import datetime
from enum import IntEnum
from typing import Any, Dict, List, Optional

import psutil


class DebugLevel(IntEnum):
    """Debug levels for the logger."""
    NONE = 0        # No debugging output
    ERROR = 1       # Only error messages
    INFO = 2        # Basic information
    DEBUG = 3       # Detailed debugging information
    TRACE = 4       # Full trace of all operations


def debug_level_from_verbosity(verbose: int) -> DebugLevel:
    """-v, -vv, -vvv"""
    if verbose <= 0:
        return DebugLevel.NONE
    if verbose == 1:
        return DebugLevel.INFO
    if verbose == 2:
        return DebugLevel.DEBUG
    return DebugLevel.TRACE


class PhaseGenLogger:
    """
    Session logger for a PhaseGen run: owns the handlers of the "phasegen"
    logger and collects events and stage timings for the session data file.
    """
    def __init__(self, log_dir: str = "logs", log_level: int = logging.INFO,
                 debug_level: DebugLevel = DebugLevel.INFO, session_id: Optional[str] = None):
        self.log_dir = log_dir
        self.log_level = log_level
        self.debug_level = debug_level
        self.session_id = session_id or datetime.now().strftime("%Y%m%d_%H%M%S")

        # Performance metrics
        self.start_time = time.time()
        self.stage_times: Dict[str, List[float]] = {}
        self.memory_usage: List[float] = []
        self.events: List[Dict[str, Any]] = []
        self.diffusion_calls = 0
        self.epochs_logged = 0

        os.makedirs(log_dir, exist_ok=True)

        self.logger = logging.getLogger("phasegen")
        self.logger.setLevel(log_level)
        self.logger.propagate = False
        self._setup_handlers()

        self.logger.info(f"=== PhaseGen Logging Session {self.session_id} Started ===")

    def _setup_handlers(self):
        """Set up logging handlers for file and console output"""
        for handler in list(self.logger.handlers):
            handler.close()
        self.logger.handlers = []

        # File handler for complete logs
        self.log_file_path = os.path.join(self.log_dir, f"phasegen_{self.session_id}.log")
        file_handler = logging.FileHandler(self.log_file_path)
        file_handler.setFormatter(logging.Formatter('%(asctime)s - %(levelname)s - %(message)s'))
        self.logger.addHandler(file_handler)

        # Console handler
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))
        self.logger.addHandler(console_handler)

        # JSON file for structured logging
        self.json_file_path = os.path.join(self.log_dir, f"phasegen_{self.session_id}_structured.log")
        with open(self.json_file_path, 'w') as f:
            f.write('[]')

    @property
    def data_file_path(self) -> str:
        return os.path.join(self.log_dir, f"phasegen_{self.session_id}_data.json")

    def close(self):
        for handler in list(self.logger.handlers):
            handler.close()
        self.logger.handlers = []

    def info(self, message: str):
        self.logger.info(message)

    def warning(self, message: str):
        self.logger.warning(message)

    def error(self, message: str):
        self.logger.error(message)

    def debug(self, message: str, level: DebugLevel = DebugLevel.DEBUG):
        """Log a debug message at the specified level"""
        if level <= self.debug_level:
            if level == DebugLevel.ERROR:
                self.logger.error(f"DEBUG: {message}")
            elif level == DebugLevel.INFO:
                self.logger.info(f"DEBUG: {message}")
            elif level == DebugLevel.DEBUG:
                self.logger.debug(f"DEBUG: {message}")
            elif level == DebugLevel.TRACE:
                self.logger.debug(f"TRACE: {message}")

    def log_event(self, kind: str, data: Dict[str, Any]):
        """Record a structured event and append it to the JSON event log"""
        event = {"type": kind, "data": data, "timestamp": time.time()}
        self.events.append(event)
        self._log_structured_data(event)
        self._sample_memory()

    def log_epoch(self, stage: str, epoch: int, loss: float, lr: float):
        self.epochs_logged += 1
        self.debug(f"{stage} epoch {epoch}: loss={loss:.6f} lr={lr:.2e}", DebugLevel.DEBUG)
        self.log_event("epoch", {"stage": stage, "epoch": epoch, "loss": loss, "lr": lr})

    def log_diffusion_call(self, prompt: Optional[str], conditioned: bool, seed: int, guidance: float):
        self.diffusion_calls += 1
        self.debug(f"diffusion call #{self.diffusion_calls}: prompt={prompt!r} pose={conditioned}",
                   DebugLevel.TRACE)
        self.log_event("diffusion_call", {"prompt": prompt, "pose": conditioned, "seed": seed,
                                          "guidance": guidance})

    def log_stage_time(self, stage: str, seconds: float):
        self.stage_times.setdefault(stage, []).append(seconds)
        self.logger.info(f"{stage} took {seconds:.3f}s")
        self.log_event("stage_time", {"stage": stage, "seconds": seconds})

    def _log_structured_data(self, data: Dict[str, Any]):
        """Log structured data to JSON file"""
        try:
            with open(self.json_file_path, 'r') as f:
                try:
                    existing_data = json.load(f)
                except json.JSONDecodeError:
                    existing_data = []
            existing_data.append(data)
            with open(self.json_file_path, 'w') as f:
                json.dump(existing_data, f)
        except OSError as e:
            self.logger.error(f"Error logging structured data: {e}")

    def _sample_memory(self):
        try:
            rss = psutil.Process(os.getpid()).memory_info().rss
            self.memory_usage.append(rss / 1024 / 1024)
        except psutil.Error:
            pass

    def get_session_summary(self) -> Dict[str, Any]:
        """Get a summary of the current session"""
        return {
            "session_id": self.session_id,
            "events": len(self.events),
            "epochs": self.epochs_logged,
            "diffusion_calls": self.diffusion_calls,
            "duration": time.time() - self.start_time,
        }

    def get_performance_metrics(self) -> Dict[str, Any]:
        elapsed_time = time.time() - self.start_time
        metrics: Dict[str, Any] = {"elapsed_time": elapsed_time}

        if self.stage_times:
            metrics["stage_times"] = {
                stage: {"count": len(times), "min": min(times), "max": max(times),
                        "avg": sum(times) / len(times), "total": sum(times)}
                for stage, times in self.stage_times.items()
            }

        self._sample_memory()
        if self.memory_usage:
            metrics["memory_usage"] = {
                "min": min(self.memory_usage),
                "max": max(self.memory_usage),
                "avg": sum(self.memory_usage) / len(self.memory_usage),
                "current": self.memory_usage[-1],
            }
        return metrics

    def save_session_data(self) -> str:
        """Save structured session data to a file"""
        summary = self.get_session_summary()
        summary["events"] = self.events
        summary["performance"] = self.get_performance_metrics()
        with open(self.data_file_path, 'w') as f:
            json.dump(summary, f, indent=2)
        self.logger.info(f"Session data saved to {self.data_file_path}")
        return self.data_file_path

    def set_debug_level(self, level: DebugLevel):
        """Set the debug level"""
        self.debug_level = level

        # Update log level based on debug level
        if level == DebugLevel.NONE:
            self.log_level = logging.WARNING
        elif level == DebugLevel.ERROR:
            self.log_level = logging.ERROR
        elif level == DebugLevel.INFO:
            self.log_level = logging.INFO
        else:
            self.log_level = logging.DEBUG
        self.logger.setLevel(self.log_level)


# Global logger instance
phasegen_logger: Optional[PhaseGenLogger] = None


def get_logger(log_dir: str = "logs", log_level: int = logging.INFO,
               debug_level: DebugLevel = DebugLevel.INFO) -> PhaseGenLogger:
    """Get or create the global logger instance"""
    global phasegen_logger
    if phasegen_logger is None:
        phasegen_logger = PhaseGenLogger(log_dir, log_level, debug_level)
    return phasegen_logger


def reset_logger():
    """Close the global session so the next get_logger() starts a new one"""
    global phasegen_logger
    if phasegen_logger is not None:
        phasegen_logger.close()
    phasegen_logger = None
