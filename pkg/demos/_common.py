import os


def out_dir(name):
    """Per-demo output directory under $SYMCTL_OUT (default demos/out)."""
    root = os.environ.get("SYMCTL_OUT", os.path.join(os.path.dirname(__file__), "out"))
    path = os.path.join(root, name)
    os.makedirs(path, exist_ok=True)
    return path
