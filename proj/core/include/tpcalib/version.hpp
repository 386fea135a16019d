#pragma once

#define TPCALIB_VERSION "0.1.0"
