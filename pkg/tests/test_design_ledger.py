#!/usr/bin/env python3
"""
Tests for the file references in DESIGN.md
"""

import unittest
import os
import re
import sys

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
REFERENCE = re.compile(r"`(examples/[^`\s]+)`")


class TestDesignReferences(unittest.TestCase):
    """Grounding paths resolve from the repository root"""

    def setUp(self):
        if not os.path.isdir(os.path.join(ROOT, "examples")):
            self.skipTest("reference tree not present")
        with open(os.path.join(ROOT, "DESIGN.md"), encoding="utf-8") as f:
            self.text = f.read()

    def test_references_exist(self):
        paths = sorted(set(REFERENCE.findall(self.text)))
        self.assertGreater(len(paths), 20)
        missing = [p for p in paths if not os.path.exists(os.path.join(ROOT, p))]
        self.assertEqual(missing, [])

    def test_no_unrooted_project_paths(self):
        self.assertNotRegex(self.text, r"`storm-surge/")
        self.assertNotRegex(self.text, r"`(finops|manifests|other_examples)/")


if __name__ == '__main__':
    unittest.main()
