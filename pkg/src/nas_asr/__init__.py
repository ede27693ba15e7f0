"""Desk-scale end-to-end speech recognition: CTC-trained child networks found
by a REINFORCE architecture search, decoded with prefix beam search and
optional n-gram language model fusion."""

__version__ = "0.1.0"
