#!/usr/bin/env python3
"""
Run-event logging providers
Records solver milestones and trial outcomes to the console or a JSON-lines file
"""

import os
import json
import logging
import time
import threading
from abc import ABC, abstractmethod
from typing import Dict, Any, Optional, List

logger = logging.getLogger(__name__)


class EventProvider(ABC):
    """Abstract base class for run-event providers"""

    @abstractmethod
    def log_solver_event(self, solver: str, status: str, details: Optional[Dict] = None) -> bool:
        """Log a solver milestone (converged, not converged, repaired)"""
        pass

    @abstractmethod
    def log_trial_event(self, trial: int, success: bool, details: Optional[Dict] = None) -> bool:
        """Log the outcome of one Monte-Carlo trial"""
        pass

    @abstractmethod
    def log_custom_event(self, event_name: str, properties: Dict[str, Any]) -> bool:
        """Log a custom event"""
        pass

    @abstractmethod
    def flush_events(self) -> bool:
        """Flush any pending events"""
        pass


class ConsoleEventProvider(EventProvider):
    """Routes events to the standard logging tree"""

    def __init__(self, level: int = logging.INFO):
        self.level = level
        self.events_logger = logging.getLogger("kron_gemini.events")

    def log_solver_event(self, solver: str, status: str, details: Optional[Dict] = None) -> bool:
        self.events_logger.log(self.level, f"solver={solver} status={status} {details or {}}")
        return True

    def log_trial_event(self, trial: int, success: bool, details: Optional[Dict] = None) -> bool:
        level = self.level if success else logging.WARNING
        self.events_logger.log(level, f"trial={trial} success={success} {details or {}}")
        return True

    def log_custom_event(self, event_name: str, properties: Dict[str, Any]) -> bool:
        self.events_logger.log(self.level, f"{event_name} {properties}")
        return True

    def flush_events(self) -> bool:
        return True


class JsonlEventProvider(EventProvider):
    """Buffers events and appends them to a JSON-lines file"""

    def __init__(self, path: str, max_batch_size: int = 100):
        self.path = path
        self.pending_events: List[Dict[str, Any]] = []
        self.max_batch_size = max_batch_size
        self._lock = threading.Lock()

    def _append(self, event: Dict[str, Any]) -> bool:
        event["time"] = int(time.time() * 1000)
        with self._lock:
            self.pending_events.append(event)
            full = len(self.pending_events) >= self.max_batch_size
        if full:
            return self.flush_events()
        return True

    def log_solver_event(self, solver: str, status: str, details: Optional[Dict] = None) -> bool:
        return self._append({"kind": "solver", "solver": solver, "status": status,
                             "details": details or {}})

    def log_trial_event(self, trial: int, success: bool, details: Optional[Dict] = None) -> bool:
        return self._append({"kind": "trial", "trial": trial, "success": success,
                             "details": details or {}})

    def log_custom_event(self, event_name: str, properties: Dict[str, Any]) -> bool:
        return self._append({"kind": "custom", "name": event_name, "data": properties})

    def flush_events(self) -> bool:
        """Append pending events to the file"""
        with self._lock:
            batch, self.pending_events = self.pending_events, []
        if not batch:
            return True

        try:
            directory = os.path.dirname(self.path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(self.path, 'a') as f:
                for event in batch:
                    f.write(json.dumps(event, default=str) + "\n")
            logger.debug(f"Wrote {len(batch)} events to {self.path}")
            return True
        except OSError as e:
            logger.error(f"Failed to flush events to {self.path}: {e}")
            with self._lock:
                self.pending_events[:0] = batch
            return False


class EventLogManager:
    """Selects and fronts an event provider"""

    def __init__(self, provider_type: str = "console", out_dir: Optional[str] = None):
        self.provider_type = provider_type.lower()
        self.provider: Optional[EventProvider] = None

        if self.provider_type == 'console':
            self.provider = ConsoleEventProvider()
        elif self.provider_type == 'jsonl':
            if out_dir:
                self.provider = JsonlEventProvider(os.path.join(out_dir, "events.jsonl"))
            else:
                logger.warning("jsonl event provider needs an output directory; events disabled")
                self.provider_type = 'disabled'
        elif self.provider_type == 'disabled':
            logger.debug("Event provider disabled")
        else:
            logger.warning(f"Unknown event provider type: {provider_type}")
            self.provider_type = 'disabled'

    def get_provider(self) -> Optional[EventProvider]:
        return self.provider

    def get_provider_type(self) -> str:
        return self.provider_type

    def log_solver_event(self, solver: str, status: str, details: Optional[Dict] = None) -> bool:
        if self.provider:
            return self.provider.log_solver_event(solver, status, details)
        return True

    def log_trial_event(self, trial: int, success: bool, details: Optional[Dict] = None) -> bool:
        if self.provider:
            return self.provider.log_trial_event(trial, success, details)
        return True

    def log_custom_event(self, event_name: str, properties: Dict[str, Any]) -> bool:
        if self.provider:
            return self.provider.log_custom_event(event_name, properties)
        return True

    def flush_events(self) -> bool:
        if self.provider:
            return self.provider.flush_events()
        return True


NULL_EVENTS = EventLogManager("disabled")
