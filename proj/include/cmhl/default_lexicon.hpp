#pragma once

// Bundled synonym rows used when no lexicon file is configured. One row per
// line, comma separated; every word in a row is a synonym of the others.

namespace cmhl {

inline constexpr const char* kDefaultLexicon = R"(happy,glad,cheerful,joyful
sad,unhappy,sorrowful,down
angry,mad,furious,irate
afraid,scared,frightened,fearful
surprised,astonished,amazed,stunned
love,adore,cherish
tired,exhausted,weary,drained
calm,peaceful,serene,tranquil
anxious,nervous,uneasy,worried
lonely,isolated,alone
excited,thrilled,eager
bored,uninterested,listless
hurt,wounded,injured
hopeless,despairing,desperate
hopeful,optimistic,confident
grateful,thankful,appreciative
ashamed,embarrassed,humiliated
guilty,remorseful,sorry
jealous,envious,resentful
proud,pleased,satisfied
confused,puzzled,bewildered
annoyed,irritated,bothered
miserable,wretched,depressed
safe,secure,protected
strong,powerful,sturdy
weak,frail,feeble
good,fine,nice
bad,awful,terrible
great,wonderful,fantastic,excellent
small,little,tiny
big,large,huge
very,really,extremely
quickly,rapidly,swiftly
slowly,gradually
feel,sense
think,believe,suppose
want,desire,wish
need,require
help,assist,support
talk,speak,chat
say,tell,state
look,see,watch
start,begin,commence
stop,end,cease
try,attempt
get,obtain,receive
make,create,build
friend,pal,companion
house,home
job,work,occupation
money,cash,funds
problem,issue,trouble
idea,thought,notion
life,existence
day,daytime
night,evening
time,period
people,persons,folks
child,kid,youngster
family,relatives,kin
doctor,physician
medicine,medication,drug
pain,ache,soreness
sick,ill,unwell
healthy,well,fit
sleep,rest,slumber
cry,weep,sob
laugh,giggle,chuckle
scream,yell,shout
smile,grin
fight,argue,quarrel
leave,depart,go
stay,remain
lose,misplace
find,discover,locate
hate,loathe,despise
like,enjoy,fancy
kind,caring,gentle
cruel,harsh,mean
beautiful,lovely,pretty
ugly,unattractive,hideous
smart,clever,intelligent
stupid,foolish,dumb
rich,wealthy,affluent
poor,needy,broke
easy,simple,effortless
hard,difficult,tough
quiet,silent,still
loud,noisy
strange,odd,weird
normal,ordinary,usual
important,significant,crucial
enough,sufficient,adequate
overwhelmed,swamped,overloaded
stressed,tense,strained
relaxed,easygoing,composed
content,fulfilled
shocked,startled,dumbfounded
terrified,petrified,horrified
delighted,overjoyed,elated
heartbroken,devastated,crushed
)";

}  // namespace cmhl
