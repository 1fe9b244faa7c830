"""Normal-to-whispered speech conversion: DSP recipe, GMM and DNN converters
over a shared mel-cepstral noise vocoder."""

__version__ = "0.1.0"
