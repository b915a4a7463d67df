import json
from pathlib import Path


def load_json(source):
    """Parse ``source`` as inline JSON text, or read it from a file path."""
    text = str(source)
    if text.lstrip()[:1] in ("{", "["):
        return json.loads(text)
    return json.loads(Path(text).read_text())
