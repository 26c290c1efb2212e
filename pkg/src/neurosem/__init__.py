"""EEG-to-caption alignment toolkit.

A multi-head transformer encoder is contrastively aligned to a multilevel
caption-embedding bank, then used for caption retrieval, prompt assembly
for an external text-to-image endpoint, ensemble classification, gradient
saliency maps, t-SNE views, and generative-quality metrics.
"""

__version__ = "0.1.0"
