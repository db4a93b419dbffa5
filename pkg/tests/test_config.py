#!/usr/bin/env python3
"""
Tests for settings resolution and run-event providers
"""

import unittest
import os
import sys
import json
import tempfile
from unittest.mock import patch

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from kron_gemini.clime import ClimeOptions
from kron_gemini.config import DEFAULT_CONFIG_PATH, Settings, load_settings, validate
from kron_gemini.errors import ConfigError
from kron_gemini.events import (ConsoleEventProvider, EventLogManager, JsonlEventProvider,
                                NULL_EVENTS)
from kron_gemini.glasso import GlassoOptions


class TestSettings(unittest.TestCase):
    """Defaults, YAML file and environment"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "settings.yaml")

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, text: str):
        with open(self.path, 'w') as f:
            f.write(text)

    def test_defaults_file_matches_dataclass(self):
        self.assertTrue(os.path.exists(DEFAULT_CONFIG_PATH))
        self.assertEqual(load_settings(DEFAULT_CONFIG_PATH, environ={}), Settings())

    def test_missing_file_gives_defaults(self):
        self.assertEqual(load_settings(os.path.join(self.tmp.name, "none.yaml"), environ={}), Settings())

    def test_yaml_values(self):
        self.write("max_sweeps: 50\nclime_inner: admm\nedge_tol: 1.0e-6\n")
        settings = load_settings(self.path, environ={})
        self.assertEqual(settings.max_sweeps, 50)
        self.assertEqual(settings.clime_inner, "admm")
        self.assertEqual(settings.edge_tol, 1e-6)

    def test_environment_overrides_yaml(self):
        self.write("threads: 2\n")
        settings = load_settings(self.path, environ={"KRON_GEMINI_THREADS": "8",
                                                     "KRON_GEMINI_LOG_LEVEL": "debug"})
        self.assertEqual(settings.threads, 8)
        self.assertEqual(settings.log_level, "debug")

    def test_config_path_from_environment(self):
        self.write("kron_guard: 100\n")
        settings = load_settings(environ={"KRON_GEMINI_CONFIG": self.path})
        self.assertEqual(settings.kron_guard, 100)

    @patch.dict(os.environ, {"KRON_GEMINI_MAX_SWEEPS": "77"})
    def test_process_environment(self):
        settings = load_settings(os.path.join(self.tmp.name, "none.yaml"), use_dotenv=False)
        self.assertEqual(settings.max_sweeps, 77)

    def test_invalid_values(self):
        with self.assertRaises(ConfigError):
            load_settings(os.path.join(self.tmp.name, "none.yaml"), environ={"KRON_GEMINI_THREADS": "many"})
        with self.assertRaises(ConfigError):
            load_settings(os.path.join(self.tmp.name, "none.yaml"), environ={"KRON_GEMINI_CONV_TOL": "-1"})

    def test_unknown_key(self):
        self.write("colour: blue\n")
        with self.assertRaises(ConfigError):
            load_settings(self.path, environ={})

    def test_malformed_yaml(self):
        self.write("threads: [1, 2\n")
        with self.assertRaises(ConfigError):
            load_settings(self.path, environ={})

    def test_validate(self):
        for bad in ({"clime_inner": "simplex"}, {"event_provider": "kafka"}, {"log_level": "LOUD"},
                    {"threads": 0}):
            with self.subTest(bad=bad):
                with self.assertRaises(ConfigError):
                    validate(Settings(**bad))

    def test_with_overrides_skips_none(self):
        settings = Settings().with_overrides(threads=None, event_provider="disabled")
        self.assertEqual(settings.threads, 1)
        self.assertEqual(settings.event_provider, "disabled")

    def test_solver_options_from_settings(self):
        settings = Settings(max_sweeps=42, clime_inner="admm", threads=3)
        self.assertEqual(GlassoOptions.from_settings(settings).max_sweeps, 42)
        clime_opts = ClimeOptions.from_settings(settings)
        self.assertEqual((clime_opts.inner, clime_opts.threads), ("admm", 3))


class TestEventProviders(unittest.TestCase):
    """Console and JSON-lines providers"""

    def test_console_provider_logs(self):
        provider = ConsoleEventProvider()
        with self.assertLogs("kron_gemini.events", level="INFO") as logs:
            provider.log_solver_event("glasso", "converged", {"sweeps": 3})
            provider.log_trial_event(4, False, {"cause": "NotPD"})
        self.assertIn("solver=glasso status=converged", logs.output[0])
        self.assertTrue(logs.output[1].startswith("WARNING"))

    def test_jsonl_provider_flush(self):
        with tempfile.TemporaryDirectory() as d:
            path = os.path.join(d, "events.jsonl")
            provider = JsonlEventProvider(path)
            provider.log_solver_event("clime", "solved", {"lambda": 0.1})
            provider.log_custom_event("simulate", {"n": 2})
            self.assertFalse(os.path.exists(path))
            self.assertTrue(provider.flush_events())
            with open(path) as f:
                events = [json.loads(line) for line in f]
        self.assertEqual([e["kind"] for e in events], ["solver", "custom"])
        self.assertEqual(events[0]["details"], {"lambda": 0.1})

    def test_jsonl_provider_batches(self):
        with tempfile.TemporaryDirectory() as d:
            path = os.path.join(d, "events.jsonl")
            provider = JsonlEventProvider(path, max_batch_size=2)
            provider.log_trial_event(0, True)
            provider.log_trial_event(1, True)
            self.assertEqual(provider.pending_events, [])
            with open(path) as f:
                self.assertEqual(len(f.readlines()), 2)

    def test_jsonl_flush_failure_keeps_events(self):
        provider = JsonlEventProvider("/nonexistent/events.jsonl")
        provider.log_trial_event(0, True)
        with patch("builtins.open", side_effect=OSError("disk full")), \
                patch("os.makedirs"):
            self.assertFalse(provider.flush_events())
        self.assertEqual(len(provider.pending_events), 1)

    def test_manager_selection(self):
        with tempfile.TemporaryDirectory() as d:
            self.assertIsInstance(EventLogManager("jsonl", out_dir=d).get_provider(), JsonlEventProvider)
        self.assertEqual(EventLogManager("jsonl").get_provider_type(), "disabled")
        self.assertEqual(EventLogManager("kafka").get_provider_type(), "disabled")
        self.assertIsInstance(EventLogManager("CONSOLE").get_provider(), ConsoleEventProvider)

    def test_disabled_manager_accepts_events(self):
        self.assertIsNone(NULL_EVENTS.get_provider())
        self.assertTrue(NULL_EVENTS.log_solver_event("glasso", "converged"))
        self.assertTrue(NULL_EVENTS.flush_events())


if __name__ == '__main__':
    unittest.main()
