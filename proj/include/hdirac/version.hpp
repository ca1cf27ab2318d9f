#pragma once

#define HDIRAC_VERSION "0.1.0"
