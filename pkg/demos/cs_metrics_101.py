"""
Code-switching metrics on small tag streams
===========================================

Each token carries a language tag, m (matrix) or e (embedded).
"""
from csgan.metrics import (TagStream, burstiness, i_index, language_entropy,
                           m_index, report_for_stream, span_lengths)

s = list("mmeme")
print("stream      ", "".join(s))
print("M-index     ", round(m_index(s), 4))
print("entropy     ", round(language_entropy(s), 4))
print("I-index     ", i_index(s))
print("spans       ", span_lengths(s))
print("burstiness  ", round(burstiness(s), 4))

# perfectly periodic switching
alt = list("memememe")
print(m_index(alt), language_entropy(alt), i_index(alt), burstiness(alt))

# one language only: burstiness has a single span and is undefined
print(burstiness(list("mmmm")))

# corpus level: utterances are pooled but switches never cross them
corpus = TagStream.from_utterances([list("mme"), list("eem"), list("mmmm")])
rep = report_for_stream(corpus, name="toy")
print(rep.row())
