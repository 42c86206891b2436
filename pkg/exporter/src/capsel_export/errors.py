class ExportError(RuntimeError):
    """Any condition that must abort an export: bad manifest, missing
    files, unreadable images, caption misalignment, encoder mismatch."""
