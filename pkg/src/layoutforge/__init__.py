"""layoutforge: task-performance prediction and gradient-based improvement
of 2D mobile UI layouts."""

__version__ = "0.1.0"
