#pragma once

#include "signrec/bundle.hpp"
#include "signrec/dataset.hpp"
#include "signrec/decoder.hpp"
#include "signrec/density.hpp"
#include "signrec/epenthesis.hpp"
#include "signrec/error.hpp"
#include "signrec/frames.hpp"
#include "signrec/hmm.hpp"
#include "signrec/isolated.hpp"
#include "signrec/metrics.hpp"
#include "signrec/parallel.hpp"
#include "signrec/synth.hpp"
#include "signrec/tying.hpp"
