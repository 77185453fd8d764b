#!/usr/bin/env python3
"""
Test script for the error hierarchy.
"""

import unittest

from errors import (CheckpointError, ConfigError, DivergenceError, ExportError, MotionParseError, PhaseGenError,
                    StructuralError, ValidationError)


class TestErrors(unittest.TestCase):
    """Test cases for categories and exit codes."""

    def test_exit_codes(self):
        for cls in (StructuralError, ValidationError, ConfigError, CheckpointError):
            self.assertEqual(cls("x").exit_code, 3, msg=cls.__name__)
        self.assertEqual(DivergenceError("x").exit_code, 1)
        self.assertEqual(ExportError("x").exit_code, 1)
        self.assertEqual(PhaseGenError("x").to_dict(), {"category": "runtime", "message": "x"})

    def test_builtin_bases(self):
        self.assertIsInstance(ValidationError("x"), ValueError)
        self.assertIsInstance(ConfigError("x"), ValueError)
        self.assertIsInstance(ExportError("x"), OSError)

    def test_parse_error_context(self):
        error = MotionParseError("missing field", path="clip.json", field="fps", line=4)
        self.assertEqual(str(error), "missing field (file=clip.json, line=4, field=fps)")
        self.assertEqual(error.to_dict()["field"], "fps")
        self.assertEqual(MotionParseError("bad").to_dict()["line"], None)

    def test_divergence_diagnostic(self):
        error = DivergenceError("loss is not finite", epoch=2, batch=5, last_finite_loss=0.25)
        self.assertIn("epoch=2, batch=5", str(error))
        self.assertEqual(error.to_dict()["category"], "divergence")


if __name__ == '__main__':
    unittest.main()
