"""cellcast: turn Jupyter notebooks into narrated, animated tutorial videos.

Pipeline: parse the notebook, derive its logic flow, author a scene-based
design script (emphasis elements + categorized narration), synthesize audio,
compile an absolute timeline, and render frames into an MP4 or an image
sequence.
"""

__version__ = "0.1.0"
