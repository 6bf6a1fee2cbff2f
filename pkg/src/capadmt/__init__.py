"""Performance analysis toolkit for continuous-aperture fading channels."""
