# Lazy belief-space planning bench
