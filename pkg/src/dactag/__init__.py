"""Seq2seq dialog-act tagging."""
