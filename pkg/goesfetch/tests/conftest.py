import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"
CONFORMANCE = Path(__file__).resolve().parents[2] / "conformance"
